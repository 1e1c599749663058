#include <doctest.h>

#include <algorithm>
#include <set>

#include "omniban/gradcheck.hpp"

using namespace omniban;

namespace {

std::vector<OpKind> differentiable_ops() {
  std::vector<OpKind> ops;
  for (int k = static_cast<int>(OpKind::kMatMul); k <= static_cast<int>(OpKind::kBceWithLogits); ++k) {
    ops.push_back(static_cast<OpKind>(k));
  }
  return ops;
}

const GradCase& find_case(const std::string& name) {
  const auto& reg = gradcheck_registry();
  auto it = std::find_if(reg.begin(), reg.end(), [&](const GradCase& c) { return c.name == name; });
  REQUIRE(it != reg.end());
  return *it;
}

struct FaultGuard {
  explicit FaultGuard(OpKind k) { testing::set_backward_fault(k); }
  ~FaultGuard() { testing::set_backward_fault(std::nullopt); }
};

}  // namespace

TEST_CASE("registry lists every differentiable op exactly once") {
  std::multiset<std::string> op_lines;
  std::set<std::string> all_names;
  for (const auto& c : gradcheck_registry()) {
    CHECK(all_names.insert(c.name).second);
    if (c.group == CaseGroup::kOp) op_lines.insert(c.name);
  }
  for (OpKind k : differentiable_ops()) CHECK(op_lines.count(std::string(op_name(k))) == 1);
  CHECK(op_lines.size() == differentiable_ops().size());
  CHECK(all_names.count("model.omniban") == 1);
  CHECK(all_names.count("model.coattention") == 1);
}

TEST_CASE("every registered check passes on 10 seeds") {
  const GradcheckReport report = run_gradcheck(100, 10);
  for (const auto& line : report.lines) {
    INFO(line.name << " worst " << line.worst_error);
    CHECK(line.passed);
    CHECK(line.worst_error < kGradcheckTolerance);
  }
}

TEST_CASE("a sign flip in any backward rule is detected") {
  for (OpKind k : differentiable_ops()) {
    INFO(op_name(k));
    FaultGuard guard(k);
    GradProblem p = find_case(std::string(op_name(k))).make(0);
    CHECK(check_gradients(p).relative_error > 1e-2);
  }
  // The full-model checks catch a broken rule deep inside the graph.
  FaultGuard guard(OpKind::kSoftmax);
  GradProblem p = find_case("model.omniban").make(0);
  CHECK(check_gradients(p).relative_error > kGradcheckTolerance);
}

TEST_CASE("tiny model config matches the check dimensions") {
  const FusionConfig c = tiny_config(Architecture::kCoattention);
  CHECK(c.d_v == 8);
  CHECK(c.d_q == 8);
  CHECK(c.d_m == 4);
  CHECK(c.glimpses == 2);
  CHECK(c.heads == 2);
  CHECK(c.coattention_layers == 1);
  CHECK(c.answers == 3);
}
