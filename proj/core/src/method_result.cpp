#include "clutter_vi/method_result.hpp"

namespace clutter_vi {

std::string_view method_name(MethodId id) {
  switch (id) {
    case MethodId::elbo_gaa: return "elbo_gaa";
    case MethodId::laplace: return "laplace";
    case MethodId::ep: return "ep";
    case MethodId::mf_vi: return "mf_vi";
    case MethodId::numeric_baseline: return "numeric_baseline";
  }
  return "unknown";
}

std::optional<MethodId> parse_method(std::string_view name) {
  if (name == "elbo_gaa" || name == "gaa") return MethodId::elbo_gaa;
  if (name == "laplace") return MethodId::laplace;
  if (name == "ep") return MethodId::ep;
  if (name == "mf_vi" || name == "mf") return MethodId::mf_vi;
  if (name == "numeric_baseline" || name == "baseline") {
    return MethodId::numeric_baseline;
  }
  return std::nullopt;
}

}  // namespace clutter_vi
