#include "ces/convex/transform.hpp"

#include "ces/common/error.hpp"

namespace ces::convex {

ConicProblem linearize_socp_to_qp(const ConicProblem& problem) {
  ConicProblem out = problem;
  auto cones = std::move(out.mutable_cones());
  out.mutable_cones().clear();
  for (const auto& c : cones) {
    if (!c.branch_flow_loss) {
      throw Error(ErrorCode::kInvalidArgument,
                  "cone '" + c.label + "' is not a branch-flow relaxation");
    }
    std::string label = c.label.empty() ? std::string() : c.label + ":lossless";
    out.add_equality({{*c.branch_flow_loss, 1.0}}, 0.0, std::move(label));
  }
  return out;
}

}  // namespace ces::convex
