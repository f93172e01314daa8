#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>

namespace logstore {

enum class Distribution { Uniform, Zipfian };

struct OpMix {
  int put = 50;
  int get = 40;
  int del = 10;
};

struct WorkloadSpec {
  Distribution distribution = Distribution::Uniform;
  double theta = 0.99;
  std::uint64_t key_min = 0;
  std::uint64_t key_max = 2'000'000'000;  // exclusive
  std::size_t value_size = 1024;
  OpMix mix;
  std::uint64_t op_count = 0;
  std::uint64_t seed = 1;

  std::uint64_t key_space() const noexcept { return key_max - key_min; }
  /// Throws InvalidArgument for an empty key space, a bad theta or a mix
  /// that does not sum to 100.
  void validate() const;
};

/// Eight bytes, big-endian, so byte order matches numeric order.
std::string encode_key(std::uint64_t k);
std::uint64_t decode_key(std::string_view key);

/// Zipfian ranks over [0, n): P(rank r) proportional to 1/(r+1)^theta, rank 0
/// the most popular. Uses the closed-form YCSB generator (one uniform draw
/// per sample, no rejection loop).
class ZipfianGenerator {
 public:
  ZipfianGenerator(std::uint64_t n, double theta);
  std::uint64_t next(std::mt19937_64& rng);
  std::uint64_t n() const noexcept { return n_; }
  double zeta_n() const noexcept { return zeta_n_; }

  /// Generalized harmonic number sum_{i=1..n} 1/i^theta. Exact up to 10^7
  /// terms, Euler-Maclaurin tail beyond that.
  static double zeta(std::uint64_t n, double theta);

 private:
  std::uint64_t n_;
  double theta_, alpha_, zeta_n_, eta_, half_pow_theta_;
};

enum class OpKind { Put, Get, Delete };

struct WorkloadOp {
  OpKind kind;
  std::uint64_t key;
  std::string value;  // Put only
};

/// Seeded op stream. Equal specs produce equal streams.
class Workload {
 public:
  explicit Workload(WorkloadSpec spec);
  std::uint64_t next_key();
  WorkloadOp next_op();
  std::string make_value();
  const WorkloadSpec& spec() const noexcept { return spec_; }

 private:
  WorkloadSpec spec_;
  std::mt19937_64 rng_;
  std::optional<ZipfianGenerator> zipf_;
  std::uint64_t counter_ = 0;
};

}  // namespace logstore
