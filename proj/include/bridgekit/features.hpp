#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "bridgekit/common.hpp"

namespace bridgekit {

enum class LibraryKind { affine_time_poly, monomial_tensor };

std::string_view to_string(LibraryKind k);
LibraryKind parse_library_kind(std::string_view name);

/// Symbolic basis Xi(x, t) = Phi(x) (x) Psi(t) with Psi(t) = {1, t, ..., t^R}.
///
/// Evaluation order is time-major: block r holds every state feature times t^r,
/// for r = 0..R. Within a block the state features are
///   affine_time_poly: x1, ..., xd, then 1 (if include_bias)
///   monomial_tensor:  every monomial of total degree <= D in graded-lex order
///                     (1 first if include_bias, then x1..xd, x1^2, x1*x2, ...)
class FeatureLibrary {
 public:
  FeatureLibrary() = default;
  FeatureLibrary(LibraryKind kind, int dim, int state_degree, int time_degree, bool include_bias);

  static FeatureLibrary affine(int dim, int time_degree, bool include_bias = true) {
    return {LibraryKind::affine_time_poly, dim, 1, time_degree, include_bias};
  }
  static FeatureLibrary monomial(int dim, int state_degree, int time_degree,
                                 bool include_bias = true) {
    return {LibraryKind::monomial_tensor, dim, state_degree, time_degree, include_bias};
  }

  LibraryKind kind() const { return kind_; }
  int dim() const { return dim_; }
  int state_degree() const { return state_degree_; }
  int time_degree() const { return time_degree_; }
  bool include_bias() const { return include_bias_; }

  int state_feature_count() const { return static_cast<int>(state_terms_.size()); }
  int feature_count() const { return state_feature_count() * (time_degree_ + 1); }

  /// Writes Xi(x, t) into out (length feature_count()).
  void eval(std::span<const double> x, double t, std::span<double> out) const;
  Vector eval(const Vector& x, double t) const;

  /// Feature names in evaluation order, e.g. "x3*t^2", "x1*x2", "t", "1".
  std::vector<std::string> names() const;

  friend bool operator==(const FeatureLibrary& a, const FeatureLibrary& b) {
    return a.kind_ == b.kind_ && a.dim_ == b.dim_ && a.state_degree_ == b.state_degree_ &&
           a.time_degree_ == b.time_degree_ && a.include_bias_ == b.include_bias_;
  }

 private:
  LibraryKind kind_ = LibraryKind::affine_time_poly;
  int dim_ = 0;
  int state_degree_ = 1;
  int time_degree_ = 0;
  bool include_bias_ = true;
  // Each state feature as the list of variable indices it multiplies (empty = constant).
  std::vector<std::vector<int>> state_terms_;
};

inline int feature_count(const FeatureLibrary& lib) { return lib.feature_count(); }

inline Vector eval_features(const FeatureLibrary& lib, const Vector& x, double t) {
  return lib.eval(x, t);
}

/// One symbolic string per row of W, e.g. "-1.250·x1 + 0.500·x1*t + 2.000·1".
/// Coefficients with |w| <= zero_tol are omitted; an all-zero row gives "0".
std::vector<std::string> describe(const FeatureLibrary& lib, const Matrix& W, double zero_tol);

/// Binomial coefficient C(n, k) for the small arguments feature counts need.
long long binomial(int n, int k);

void to_json(nlohmann::json& j, const FeatureLibrary& lib);
void from_json(const nlohmann::json& j, FeatureLibrary& lib);

}  // namespace bridgekit
