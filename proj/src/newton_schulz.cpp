#include "muoneq/newton_schulz.hpp"

#include <cmath>
#include <sstream>

namespace muoneq {

void validate_polynomial(const NsPolynomial& poly) {
  std::ostringstream msg;
  msg.precision(17);
  if (!std::isfinite(poly.a) || !std::isfinite(poly.b) || !std::isfinite(poly.c)) {
    throw DomainError("NS polynomial coefficients must be finite");
  }
  if (!(poly.a > 1.0)) {
    msg << "NS polynomial: a > 1 fails (a = " << poly.a << ")";
    throw DomainError(msg.str());
  }
  // Extremes of q on [0,1] lie at t = 0, t = 1, or the vertex -b/(2c).
  double candidates[3] = {0.0, 1.0, 0.0};
  int count = 2;
  if (poly.c != 0.0) {
    const double vertex = -poly.b / (2.0 * poly.c);
    if (vertex > 0.0 && vertex < 1.0) candidates[count++] = vertex;
  }
  for (int i = 0; i < count; ++i) {
    const double t = candidates[i];
    const double qt = poly.q(t);
    if (!(qt > 0.0)) {
      msg << "NS polynomial: q(t) > 0 fails at t = " << t << " (q = " << qt << ")";
      throw DomainError(msg.str());
    }
    if (!(qt <= poly.a)) {
      msg << "NS polynomial: q(t) <= a fails at t = " << t << " (q = " << qt
          << ", a = " << poly.a << ")";
      throw DomainError(msg.str());
    }
  }
}

NsPolynomial polynomial_preset(std::string_view name) {
  if (name == "taylor") return NsPolynomial::taylor();
  if (name == "practical") return NsPolynomial::practical();
  throw UsageError("unknown NS coefficient preset '" + std::string(name) +
                   "' (expected taylor|practical)");
}

}  // namespace muoneq
