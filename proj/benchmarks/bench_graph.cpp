// Copyright 2026 The opvi Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "opvi/graph.hpp"
#include "opvi/rng.hpp"

namespace {

using namespace opvi;

// Scalar chain: repeated tanh/square mix, single input.
static void BM_EvalScalarChain(benchmark::State& state) {
  const int depth = static_cast<int>(state.range(0));
  Graph g;
  NodeId x = g.input("x", Shape::scalar());
  NodeId cur = x;
  for (int i = 0; i < depth; ++i) {
    cur = (i % 2 == 0) ? g.tanh(cur) : g.square(g.sigmoid(cur));
  }
  Evaluator ev(g);
  double v = 0.3;
  for (auto _ : state) {
    ev.bind(x, v);
    benchmark::DoNotOptimize(ev.scalar(cur));
    v += 1e-9;
  }
  state.SetItemsProcessed(state.iterations() * depth);
}
BENCHMARK(BM_EvalScalarChain)->Arg(64)->Arg(512);

// Small dense network on a vector input, evaluated through affine nodes.
static void BM_EvalMlp(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  Graph g;
  RngStream rng = RngStream::derive(7, {1});
  NodeId z = g.input("z", Shape::vector(d));
  NodeId cur = z;
  for (int layer = 0; layer < 3; ++layer) {
    std::vector<NodeId> rows;
    for (int i = 0; i < d; ++i) {
      rows.push_back(g.constant(rng.normal_vector(d) * 0.4));
    }
    cur = g.tanh(g.affine(cur, rows, g.constant(rng.normal_vector(d) * 0.1)));
  }
  NodeId root = g.sum(cur);
  Evaluator ev(g);
  Eigen::VectorXd point = rng.normal_vector(d);
  for (auto _ : state) {
    ev.bind(z, point);
    benchmark::DoNotOptimize(ev.scalar(root));
    point[0] += 1e-9;
  }
}
BENCHMARK(BM_EvalMlp)->Arg(4)->Arg(16)->Arg(64);

// Gradient-graph construction cost for the same network.
static void BM_GradConstruction(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  RngStream rng = RngStream::derive(7, {2});
  for (auto _ : state) {
    Graph g;
    NodeId z = g.input("z", Shape::vector(d));
    NodeId cur = z;
    for (int layer = 0; layer < 3; ++layer) {
      std::vector<NodeId> rows;
      for (int i = 0; i < d; ++i) {
        rows.push_back(g.constant(rng.normal_vector(d) * 0.4));
      }
      cur = g.tanh(
          g.affine(cur, rows, g.constant(rng.normal_vector(d) * 0.1)));
    }
    NodeId root = g.sum(cur);
    benchmark::DoNotOptimize(grad(g, root, z));
    benchmark::DoNotOptimize(g.size());
  }
}
BENCHMARK(BM_GradConstruction)->Arg(4)->Arg(16);

// Gradient evaluation: forward value plus full reverse sweep.
static void BM_EvalGrad(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  Graph g;
  RngStream rng = RngStream::derive(7, {3});
  NodeId z = g.input("z", Shape::vector(d));
  NodeId cur = z;
  for (int layer = 0; layer < 3; ++layer) {
    std::vector<NodeId> rows;
    for (int i = 0; i < d; ++i) {
      rows.push_back(g.constant(rng.normal_vector(d) * 0.4));
    }
    cur = g.tanh(g.affine(cur, rows, g.constant(rng.normal_vector(d) * 0.1)));
  }
  NodeId root = g.sum(cur);
  NodeId dz = grad(g, root, z);
  Evaluator ev(g);
  Eigen::VectorXd point = rng.normal_vector(d);
  for (auto _ : state) {
    ev.bind(z, point);
    benchmark::DoNotOptimize(ev.vector(dz));
    point[0] += 1e-9;
  }
}
BENCHMARK(BM_EvalGrad)->Arg(4)->Arg(16)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
