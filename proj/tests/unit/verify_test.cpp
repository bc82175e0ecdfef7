#include <gtest/gtest.h>

#include "afsd/tensor/ops.hpp"
#include "afsd/verify/gradcheck_suite.hpp"

using namespace afsd;
using namespace afsd::verify;

namespace {

// x -> x^3 with the backward sign flipped; a correct suite must flag it.
class FlippedCubeOp final : public Op {
 public:
  std::string_view name() const override { return "flipped_cube"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    Tensor out(in[0]->shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*in[0])[i] * (*in[0])[i] * (*in[0])[i];
    return out;
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                std::span<Tensor* const> gin) const override {
    if (!gin[0]) return;
    for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] -= 3.0 * (*in[0])[i] * (*in[0])[i] * g[i];
  }
};

SuiteCase flipped_case() {
  return {"flipped_cube", "primitive", [](std::mt19937_64& r) {
            std::uniform_real_distribution<double> u(-1, 1);
            Tensor x({4});
            for (auto& v : x.data()) v = u(r);
            return Probe{{{"x", x}}, [](Tape& t, std::span<const Var> v) {
                           return sum(t.apply(std::make_unique<FlippedCubeOp>(), {v[0]}));
                         }};
          }};
}

}  // namespace

TEST(GradcheckSuite, DefaultSuitePasses) {
  const auto rep = run_suite(default_suite());
  for (const auto& c : rep.cases) {
    EXPECT_TRUE(c.passed) << c.name << " " << c.max_rel_error << " " << c.error;
  }
  EXPECT_TRUE(rep.passed());
  EXPECT_GE(rep.cases.size(), 30u);
}

TEST(GradcheckSuite, SignFlipIsDetected) {
  auto cases = default_suite();
  cases.push_back(flipped_case());
  const auto rep = run_suite(cases);
  EXPECT_FALSE(rep.passed());
  EXPECT_FALSE(rep.cases.back().passed);
  EXPECT_NEAR(rep.cases.back().max_rel_error, 1.0, 1e-9);  // |a - (-a)| / 2|a|
  for (std::size_t i = 0; i + 1 < rep.cases.size(); ++i) EXPECT_TRUE(rep.cases[i].passed) << rep.cases[i].name;
}

TEST(GradcheckSuite, ReportIsDeterministicAndListsEveryCase) {
  SuiteOptions opt;
  opt.points = 2;
  const auto a = run_suite(default_suite(), opt), b = run_suite(default_suite(), opt);
  ASSERT_EQ(a.cases.size(), b.cases.size());
  for (std::size_t i = 0; i < a.cases.size(); ++i) EXPECT_EQ(a.cases[i].max_rel_error, b.cases[i].max_rel_error);
  const auto j = a.to_json();
  EXPECT_EQ(j["cases"].size(), a.cases.size());
  EXPECT_TRUE(j["cases"][0].contains("max_rel_error"));
}

TEST(GradcheckSuite, ProbeExceptionIsAFailure) {
  std::vector<SuiteCase> cases{{"bad", "primitive", [](std::mt19937_64&) {
                                  return Probe{{{"x", Tensor({2}, -3.0)}},
                                               [](Tape&, std::span<const Var> v) { return sum(log_offset(v[0], 1.0)); }};
                                }}};
  const auto rep = run_suite(cases);
  EXPECT_FALSE(rep.passed());
  EXPECT_FALSE(rep.cases[0].error.empty());
}

TEST(GradcheckSuite, PointsStraddlingAKinkAreRedrawn) {
  // Half the draws land within h of the ReLU kink, where central differences
  // are off by O(1); the convergence filter must skip them.
  std::vector<SuiteCase> cases{{"relu_near_zero", "primitive", [](std::mt19937_64& r) {
                                  const bool close = r() % 2 == 0;
                                  Tensor x({1}, close ? 1e-4 : 0.5 + std::uniform_real_distribution<double>(0, 1)(r));
                                  return Probe{{{"x", x}}, [](Tape&, std::span<const Var> v) { return sum(relu(v[0])); }};
                                }}};
  const auto rep = run_suite(cases);
  EXPECT_TRUE(rep.passed()) << rep.cases[0].max_rel_error;
  EXPECT_GT(rep.cases[0].redraws, 0);

  SuiteOptions off;
  off.convergence = 0;
  const auto raw = run_suite(cases, off);
  EXPECT_FALSE(raw.passed());
  EXPECT_EQ(raw.cases[0].redraws, 0);
}
