#include "bridgekit/latent.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

namespace bridgekit {

namespace {

constexpr std::array<char, 4> kMagic = {'B', 'K', 'L', 'P'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 8;

template <typename U>
void put_le(std::vector<unsigned char>& buf, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) buf.push_back(static_cast<unsigned char>(value >> (8 * i)));
}

template <typename U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

Moments moments_of(const Samples& X) {
  if (X.rows() >= 2) return empirical_moments(X);
  return {X.row(0).transpose(), Matrix::Zero(X.cols(), X.cols())};
}

}  // namespace

void write_latent_pairs(const std::string& path, const Samples& source, const Samples& target) {
  if (source.rows() != target.rows() || source.cols() != target.cols()) {
    throw DimensionError("write_latent_pairs: source and target shapes differ");
  }
  const Eigen::Index n = source.rows();
  const Eigen::Index d = source.cols();
  std::vector<unsigned char> buf;
  buf.reserve(kHeaderBytes + static_cast<std::size_t>(n * d) * 8);
  buf.insert(buf.end(), kMagic.begin(), kMagic.end());
  put_le<std::uint32_t>(buf, kVersion);
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(d));
  put_le<std::uint64_t>(buf, static_cast<std::uint64_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) put_le(buf, std::bit_cast<std::uint32_t>(static_cast<float>(source(i, j))));
    for (Eigen::Index j = 0; j < d; ++j) put_le(buf, std::bit_cast<std::uint32_t>(static_cast<float>(target(i, j))));
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!os) throw std::runtime_error("write failed: " + path);
}

LatentPairs ingest_latent_pairs(const std::string& path, std::optional<int> expected_dim) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());

  if (buf.size() < kMagic.size() || std::memcmp(buf.data(), kMagic.data(), kMagic.size()) != 0) {
    throw LatentMagicError(path + ": not a latent pair file (bad magic)");
  }
  if (buf.size() < kHeaderBytes) throw LatentTruncatedError(path + ": truncated header");
  const auto version = get_le<std::uint32_t>(buf.data() + 4);
  if (version != kVersion) throw LatentFormatError(path + ": unsupported version " + std::to_string(version));
  const auto dim = get_le<std::uint32_t>(buf.data() + 8);
  const auto n = get_le<std::uint64_t>(buf.data() + 12);
  if (dim == 0) throw LatentDimError(path + ": dim is zero");
  if (expected_dim && static_cast<std::uint32_t>(*expected_dim) != dim) {
    throw LatentDimError(path + ": dim " + std::to_string(dim) + " does not match expected " +
                         std::to_string(*expected_dim));
  }
  if (n == 0) throw LatentFormatError(path + ": file holds no pairs");

  const std::uint64_t payload = buf.size() - kHeaderBytes;
  const std::uint64_t record = 8ULL * dim;
  if (payload / record < n) {
    throw LatentTruncatedError(path + ": payload holds " + std::to_string(payload / record) + " of " +
                               std::to_string(n) + " records");
  }
  if (payload != n * record) throw LatentFormatError(path + ": trailing bytes after last record");

  Samples src(static_cast<Eigen::Index>(n), dim);
  Samples tgt(static_cast<Eigen::Index>(n), dim);
  const unsigned char* p = buf.data() + kHeaderBytes;
  for (Eigen::Index i = 0; i < src.rows(); ++i) {
    for (Eigen::Index j = 0; j < src.cols(); ++j, p += 4) src(i, j) = std::bit_cast<float>(get_le<std::uint32_t>(p));
    for (Eigen::Index j = 0; j < tgt.cols(); ++j, p += 4) tgt(i, j) = std::bit_cast<float>(get_le<std::uint32_t>(p));
  }
  return LatentPairs(std::move(src), std::move(tgt));
}

LatentPairs::LatentPairs(Samples source, Samples target) : source_(std::move(source)), target_(std::move(target)) {
  if (source_.rows() != target_.rows() || source_.cols() != target_.cols() || source_.rows() == 0) {
    throw DimensionError("LatentPairs: need matching non-empty source and target");
  }
  m0_ = moments_of(source_);
  m1_ = moments_of(target_);
}

void LatentPairs::sample_pair(Rng& rng, std::span<double> x0, std::span<double> x1) const {
  if (static_cast<int>(x0.size()) != dim() || static_cast<int>(x1.size()) != dim()) {
    throw DimensionError("LatentPairs: buffer dimension mismatch");
  }
  std::uniform_int_distribution<Eigen::Index> pick(0, size() - 1);
  const Eigen::Index i = pick(rng);
  as_vector(x0) = source_.row(i).transpose();
  as_vector(x1) = target_.row(i).transpose();
}

Samples LatentPairs::sample_side(Side side, Eigen::Index n, Rng& rng) const {
  const Samples& from = side == Side::source ? source_ : target_;
  std::uniform_int_distribution<Eigen::Index> pick(0, size() - 1);
  Samples out(n, from.cols());
  for (Eigen::Index r = 0; r < n; ++r) out.row(r) = from.row(pick(rng));
  return out;
}

Moments LatentPairs::marginal(Side side) const { return side == Side::source ? m0_ : m1_; }

}  // namespace bridgekit
