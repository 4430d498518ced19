// Copyright 2026 The opvi Authors
// SPDX-License-Identifier: Apache-2.0

#include "opvi/io.hpp"

#include <cstdint>
#include <cstring>
#include <iomanip>
#include <limits>
#include <vector>

#include "opvi/errors.hpp"

namespace opvi {
namespace {

constexpr char kDataMagic[4] = {'O', 'P', 'V', 'I'};
constexpr char kCheckpointMagic[4] = {'O', 'P', 'V', 'C'};
constexpr std::uint8_t kFormatVersion = 1;

void read_exact(std::istream& in, void* dst, std::size_t n,
                const std::string& what) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw IoError("truncated file while reading " + what);
  }
}

template <typename T>
T read_le(std::istream& in, const std::string& what) {
  unsigned char buf[sizeof(T)];
  read_exact(in, buf, sizeof(T), what);
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  }
  T value;
  if constexpr (sizeof(T) == 8) {
    std::memcpy(&value, &bits, sizeof(T));
  } else {
    auto narrowed = static_cast<std::uint64_t>(bits);
    std::memcpy(&value, &narrowed, sizeof(T));
  }
  return value;
}

template <typename T>
void write_le(std::ostream& out, T value) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &value, sizeof(T));
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  }
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

void check_magic(std::istream& in, const char (&magic)[4],
                 const std::string& kind) {
  char got[4];
  read_exact(in, got, 4, kind + " magic");
  if (std::memcmp(got, magic, 4) != 0) {
    throw IoError("bad magic bytes: not an " + kind + " file");
  }
  auto version = read_le<std::uint8_t>(in, kind + " version");
  if (version != kFormatVersion) {
    throw IoError("unsupported " + kind + " version " +
                  std::to_string(version));
  }
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path + " for reading");
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  return out;
}

}  // namespace

Eigen::MatrixXd load_dataset(const std::string& path) {
  std::ifstream in = open_input(path);
  check_magic(in, kDataMagic, "dataset");
  auto rows = read_le<std::uint32_t>(in, "dataset rows");
  auto cols = read_le<std::uint32_t>(in, "dataset cols");
  if (rows == 0 || cols == 0) {
    throw IoError("dataset has zero rows or columns");
  }
  std::vector<unsigned char> pixels(static_cast<std::size_t>(rows) * cols);
  read_exact(in, pixels.data(), pixels.size(), "dataset pixels");
  Eigen::MatrixXd data(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t c = 0; c < cols; ++c) {
      unsigned char p = pixels[static_cast<std::size_t>(r) * cols + c];
      if (p > 1) {
        throw IoError("non-binary pixel value " + std::to_string(int(p)) +
                      " at row " + std::to_string(r));
      }
      data(r, c) = static_cast<double>(p);
    }
  }
  return data;
}

void save_dataset(const std::string& path,
                  const Eigen::Ref<const Eigen::MatrixXd>& data) {
  if (data.rows() == 0 || data.cols() == 0) {
    throw InvalidArgumentError("cannot save an empty dataset");
  }
  if (data.rows() > std::numeric_limits<std::uint32_t>::max() ||
      data.cols() > std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidArgumentError("dataset too large for the container format");
  }
  std::ofstream out = open_output(path);
  out.write(kDataMagic, 4);
  write_le(out, kFormatVersion);
  write_le(out, static_cast<std::uint32_t>(data.rows()));
  write_le(out, static_cast<std::uint32_t>(data.cols()));
  std::vector<unsigned char> pixels;
  pixels.reserve(static_cast<std::size_t>(data.size()));
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.cols(); ++c) {
      double v = data(r, c);
      if (v != 0.0 && v != 1.0) {
        throw InvalidArgumentError("dataset entries must be 0 or 1");
      }
      pixels.push_back(v == 1.0 ? 1 : 0);
    }
  }
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  if (!out) throw IoError("failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in = open_input(path);
  check_magic(in, kCheckpointMagic, "checkpoint");
  Checkpoint sections;
  while (true) {
    in.peek();
    if (in.eof()) break;
    auto name_len = read_le<std::uint16_t>(in, "section name length");
    if (name_len == 0) throw IoError("empty section name");
    std::string name(name_len, '\0');
    read_exact(in, name.data(), name_len, "section name");
    auto count = read_le<std::uint64_t>(in, "section element count");
    Eigen::VectorXd values(static_cast<Eigen::Index>(count));
    for (std::uint64_t i = 0; i < count; ++i) {
      values[static_cast<Eigen::Index>(i)] =
          read_le<double>(in, "section \"" + name + "\"");
    }
    if (!sections.emplace(std::move(name), std::move(values)).second) {
      throw IoError("duplicate checkpoint section");
    }
  }
  return sections;
}

void save_checkpoint(const std::string& path, const Checkpoint& sections) {
  std::ofstream out = open_output(path);
  out.write(kCheckpointMagic, 4);
  write_le(out, kFormatVersion);
  for (const auto& [name, values] : sections) {
    if (name.empty() || name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw InvalidArgumentError("bad checkpoint section name");
    }
    write_le(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_le(out, static_cast<std::uint64_t>(values.size()));
    for (Eigen::Index i = 0; i < values.size(); ++i) {
      write_le(out, values[i]);
    }
  }
  if (!out) throw IoError("failed writing " + path);
}

const Eigen::VectorXd& checkpoint_section(const Checkpoint& cp,
                                          const std::string& name) {
  auto it = cp.find(name);
  if (it == cp.end()) {
    throw IoError("checkpoint is missing section \"" + name + "\"");
  }
  return it->second;
}

MetricsWriter::MetricsWriter(const std::string& path, int lambda_columns)
    : out_(path, std::ios::trunc), lambda_columns_(lambda_columns) {
  if (!out_) throw IoError("cannot open " + path + " for writing");
  out_ << "iter,objective,grad_norm_lambda,grad_norm_theta,wall_ms";
  for (int i = 0; i < lambda_columns_; ++i) out_ << ",lambda_" << i;
  out_ << "\n";
}

void MetricsWriter::write(const IterationStats& stats) {
  out_ << stats.iteration << ',' << std::setprecision(17) << stats.objective
       << ',' << stats.grad_norm_lambda << ',' << stats.grad_norm_theta << ','
       << stats.wall_ms;
  for (int i = 0; i < lambda_columns_; ++i) {
    out_ << ',' << (i < stats.lambda.size() ? stats.lambda[i] : 0.0);
  }
  out_ << "\n";
  out_.flush();
  if (!out_) throw IoError("failed writing metrics row");
}

}  // namespace opvi
