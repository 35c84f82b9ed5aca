#include "bridgekit/features.hpp"

#include <cmath>
#include <cstdio>

namespace bridgekit {

namespace {

// Exponent tuples of total degree `degree` over `dim` variables, lexicographically
// descending (x1^k first).
void exponents_of_degree(int dim, int degree, std::vector<int>& current, int var,
                         std::vector<std::vector<int>>& out) {
  if (var == dim - 1) {
    current[var] = degree;
    out.push_back(current);
    return;
  }
  for (int e = degree; e >= 0; --e) {
    current[var] = e;
    exponents_of_degree(dim, degree - e, current, var + 1, out);
  }
  current[var] = 0;
}

std::string variable_name(int dim, int index) {
  return dim == 1 ? std::string("x") : "x" + std::to_string(index + 1);
}

std::string state_name(int dim, const std::vector<int>& factors) {
  if (factors.empty()) return "1";
  std::string name;
  std::size_t i = 0;
  while (i < factors.size()) {
    std::size_t j = i;
    while (j < factors.size() && factors[j] == factors[i]) ++j;
    if (!name.empty()) name += "*";
    name += variable_name(dim, factors[i]);
    if (j - i > 1) name += "^" + std::to_string(j - i);
    i = j;
  }
  return name;
}

std::string time_suffix(int r) {
  if (r == 0) return {};
  if (r == 1) return "t";
  return "t^" + std::to_string(r);
}

}  // namespace

std::string_view to_string(LibraryKind k) {
  return k == LibraryKind::affine_time_poly ? "affine_time_poly" : "monomial_tensor";
}

LibraryKind parse_library_kind(std::string_view name) {
  if (name == "affine_time_poly") return LibraryKind::affine_time_poly;
  if (name == "monomial_tensor") return LibraryKind::monomial_tensor;
  throw std::invalid_argument("unknown feature library kind: " + std::string(name));
}

long long binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  long long r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

FeatureLibrary::FeatureLibrary(LibraryKind kind, int dim, int state_degree, int time_degree,
                               bool include_bias)
    : kind_(kind),
      dim_(dim),
      state_degree_(state_degree),
      time_degree_(time_degree),
      include_bias_(include_bias) {
  if (dim < 1) throw std::invalid_argument("FeatureLibrary: dim must be >= 1");
  if (time_degree < 0) throw std::invalid_argument("FeatureLibrary: time_degree must be >= 0");

  if (kind == LibraryKind::affine_time_poly) {
    state_degree_ = 1;
    for (int j = 0; j < dim; ++j) state_terms_.push_back({j});
    if (include_bias) state_terms_.push_back({});
  } else {
    if (state_degree < 1) {
      throw std::invalid_argument("FeatureLibrary: state_degree must be >= 1");
    }
    std::vector<int> current(dim, 0);
    for (int degree = include_bias ? 0 : 1; degree <= state_degree; ++degree) {
      std::vector<std::vector<int>> tuples;
      exponents_of_degree(dim, degree, current, 0, tuples);
      for (const auto& e : tuples) {
        std::vector<int> factors;
        for (int v = 0; v < dim; ++v)
          for (int p = 0; p < e[v]; ++p) factors.push_back(v);
        state_terms_.push_back(std::move(factors));
      }
    }
  }
}

void FeatureLibrary::eval(std::span<const double> x, double t, std::span<double> out) const {
  if (static_cast<int>(x.size()) != dim_) {
    throw DimensionError("eval_features: state has wrong dimension");
  }
  const std::size_t S = state_terms_.size();
  if (out.size() != S * static_cast<std::size_t>(time_degree_ + 1)) {
    throw DimensionError("eval_features: output buffer has wrong length");
  }
  for (std::size_t s = 0; s < S; ++s) {
    double v = 1.0;
    for (int var : state_terms_[s]) v *= x[var];
    out[s] = v;
  }
  double tp = 1.0;
  for (int r = 1; r <= time_degree_; ++r) {
    tp *= t;
    double* block = out.data() + r * S;
    for (std::size_t s = 0; s < S; ++s) block[s] = out[s] * tp;
  }
}

Vector FeatureLibrary::eval(const Vector& x, double t) const {
  Vector out(feature_count());
  eval({x.data(), static_cast<std::size_t>(x.size())}, t,
       {out.data(), static_cast<std::size_t>(out.size())});
  return out;
}

std::vector<std::string> FeatureLibrary::names() const {
  std::vector<std::string> out;
  out.reserve(feature_count());
  for (int r = 0; r <= time_degree_; ++r) {
    for (const auto& term : state_terms_) {
      std::string s = state_name(dim_, term);
      const std::string tpart = time_suffix(r);
      if (tpart.empty()) {
        out.push_back(std::move(s));
      } else if (s == "1") {
        out.push_back(tpart);
      } else {
        out.push_back(s + "*" + tpart);
      }
    }
  }
  return out;
}

std::vector<std::string> describe(const FeatureLibrary& lib, const Matrix& W, double zero_tol) {
  if (W.cols() != lib.feature_count()) {
    throw DimensionError("describe: W column count does not match the library");
  }
  const auto names = lib.names();
  std::vector<std::string> rows;
  rows.reserve(W.rows());
  char buf[64];
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    std::string expr;
    for (Eigen::Index k = 0; k < W.cols(); ++k) {
      const double w = W(i, k);
      if (!(std::abs(w) > zero_tol)) continue;
      if (expr.empty()) {
        std::snprintf(buf, sizeof buf, "%.3f", w);
        expr = buf;
      } else {
        std::snprintf(buf, sizeof buf, "%.3f", std::abs(w));
        expr += (w < 0 ? " - " : " + ");
        expr += buf;
      }
      expr += "·" + names[k];
    }
    rows.push_back(expr.empty() ? "0" : expr);
  }
  return rows;
}

void to_json(nlohmann::json& j, const FeatureLibrary& lib) {
  j = nlohmann::json{{"kind", std::string(to_string(lib.kind()))},
                     {"dim", lib.dim()},
                     {"state_degree", lib.state_degree()},
                     {"time_degree", lib.time_degree()},
                     {"include_bias", lib.include_bias()}};
}

void from_json(const nlohmann::json& j, FeatureLibrary& lib) {
  lib = FeatureLibrary(parse_library_kind(j.at("kind").get<std::string>()), j.at("dim").get<int>(),
                       j.value("state_degree", 1), j.at("time_degree").get<int>(),
                       j.value("include_bias", true));
}

}  // namespace bridgekit
