#include "logstore/workload.hpp"

#include <algorithm>
#include <cmath>

#include "logstore/types.hpp"

namespace logstore {

void WorkloadSpec::validate() const {
  if (key_max <= key_min) throw InvalidArgument("empty key space");
  if (mix.put < 0 || mix.get < 0 || mix.del < 0 || mix.put + mix.get + mix.del != 100) {
    throw InvalidArgument("op mix must be non-negative and sum to 100");
  }
  if (distribution == Distribution::Zipfian && (theta <= 0 || theta >= 1)) {
    throw InvalidArgument("zipfian theta must be in (0, 1)");
  }
}

std::string encode_key(std::uint64_t k) {
  std::string out(8, '\0');
  for (int i = 7; i >= 0; --i) {
    out[i] = static_cast<char>(k & 0xFF);
    k >>= 8;
  }
  return out;
}

std::uint64_t decode_key(std::string_view key) {
  if (key.size() != 8) throw InvalidArgument("workload keys are 8 bytes");
  std::uint64_t k = 0;
  for (unsigned char c : key) k = (k << 8) | c;
  return k;
}

double ZipfianGenerator::zeta(std::uint64_t n, double theta) {
  constexpr std::uint64_t kExact = 10'000'000;
  const std::uint64_t m = std::min(n, kExact);
  double sum = 0;
  for (std::uint64_t i = m; i >= 1; --i) sum += 1.0 / std::pow(static_cast<double>(i), theta);
  if (n == m) return sum;
  // sum_{m+1..n} i^-theta ~ integral + endpoint corrections.
  const double a = static_cast<double>(m), b = static_cast<double>(n);
  const double integral = (std::pow(b, 1 - theta) - std::pow(a, 1 - theta)) / (1 - theta);
  const double ends = 0.5 * (std::pow(b, -theta) - std::pow(a, -theta));
  const double slope = theta / 12.0 * (std::pow(a, -theta - 1) - std::pow(b, -theta - 1));
  return sum + integral + ends + slope;
}

ZipfianGenerator::ZipfianGenerator(std::uint64_t n, double theta) : n_(n), theta_(theta) {
  if (n == 0) throw InvalidArgument("zipfian over an empty range");
  alpha_ = 1.0 / (1.0 - theta_);
  zeta_n_ = zeta(n_, theta_);
  const double zeta2 = zeta(2, theta_);
  eta_ = (1.0 - std::pow(2.0 / static_cast<double>(n_), 1.0 - theta_)) / (1.0 - zeta2 / zeta_n_);
  half_pow_theta_ = 1.0 + std::pow(0.5, theta_);
}

std::uint64_t ZipfianGenerator::next(std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const double uz = u * zeta_n_;
  if (uz < 1.0) return 0;
  if (uz < half_pow_theta_) return std::min<std::uint64_t>(1, n_ - 1);
  const auto r = static_cast<std::uint64_t>(static_cast<double>(n_) * std::pow(eta_ * u - eta_ + 1.0, alpha_));
  return std::min(r, n_ - 1);
}

Workload::Workload(WorkloadSpec spec) : spec_(spec), rng_(spec.seed) {
  spec_.validate();
  if (spec_.distribution == Distribution::Zipfian) zipf_.emplace(spec_.key_space(), spec_.theta);
}

std::uint64_t Workload::next_key() {
  if (zipf_) return spec_.key_min + zipf_->next(rng_);
  return spec_.key_min + std::uniform_int_distribution<std::uint64_t>(0, spec_.key_space() - 1)(rng_);
}

std::string Workload::make_value() {
  std::string v(spec_.value_size, '\0');
  const auto stamp = ++counter_;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<char>('a' + (stamp + i) % 26);
  return v;
}

WorkloadOp Workload::next_op() {
  const int roll = std::uniform_int_distribution<int>(0, 99)(rng_);
  WorkloadOp op;
  op.key = next_key();
  if (roll < spec_.mix.put) {
    op.kind = OpKind::Put;
    op.value = make_value();
  } else if (roll < spec_.mix.put + spec_.mix.get) {
    op.kind = OpKind::Get;
  } else {
    op.kind = OpKind::Delete;
  }
  return op;
}

}  // namespace logstore
