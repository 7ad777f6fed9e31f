#include "ovtal/types.hpp"

#include <algorithm>
#include <cmath>

#include "ovtal/error.hpp"

namespace ovtal {

bool Interval::valid() const {
  return std::isfinite(start) && std::isfinite(end) && start < end;
}

void require_valid(const Interval& iv, const char* context) {
  if (!iv.valid())
    throw InvalidInput(std::string(context) + ": degenerate interval [" +
                       std::to_string(iv.start) + ", " + std::to_string(iv.end) + "]");
}

double tiou(const Interval& a, const Interval& b) {
  require_valid(a, "tiou");
  require_valid(b, "tiou");
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = a.length() + b.length() - inter;
  return inter / uni;
}

const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kLabeled: return "labeled";
    case Provenance::kInDomain: return "in_domain";
    case Provenance::kOpenDomain: return "open_domain";
  }
  return "labeled";
}

Provenance parse_provenance(const std::string& s) {
  if (s == "labeled") return Provenance::kLabeled;
  if (s == "in_domain") return Provenance::kInDomain;
  if (s == "open_domain") return Provenance::kOpenDomain;
  throw InvalidInput("unknown provenance '" + s + "'");
}

}  // namespace ovtal
