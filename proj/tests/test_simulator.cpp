#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dse/error.hpp"
#include "dse/harness.hpp"
#include "dse/simulator.hpp"
#include "support.hpp"

namespace dse {
namespace {

using testing::data_path;
using testing::ieee39;

Scenario load(const std::string& file) { return load_scenario(data_path("scenarios/" + file), ieee39()); }

SystemParams params(const Scenario& s) { return ieee39().system_params(s.dt); }

Scenario quiet_scenario(double duration = 10.0) {
  Scenario s;
  s.duration = duration;
  s.seed = 5;
  return s;
}

// Same frame repeated, so channel statistics over the stream are pure noise.
Trajectory repeated_frame(int count) {
  const Scenario s = quiet_scenario(1.0 / 60.0);
  const Trajectory one = simulate_truth(ieee39(), s, params(s));
  Trajectory t;
  for (int k = 0; k < count; ++k) {
    t.times.push_back(k / 60.0);
    t.states.push_back(one.states[0]);
    t.frames.push_back(one.frames[0]);
    t.frames.back().timestamp = t.times.back();
  }
  return t;
}

bool frames_identical(const MeasurementFrame& a, const MeasurementFrame& b) {
  return a.stacked() == b.stacked() && a.valid == b.valid && a.timestamp == b.timestamp;
}

Scenario scenario_text(const std::string& body) {
  std::istringstream in("dse-scenario 1\n" + body);
  return parse_scenario(in, ieee39());
}

// ---------------------------------------------------------------------------
// Truth

TEST(SimulateTruth, UndisturbedSystemStaysAtEquilibrium) {
  const Scenario s = quiet_scenario();
  const Trajectory t = simulate_truth(ieee39(), s, params(s));
  ASSERT_EQ(t.states.size(), 601u);
  const Vector x0 = t.states.front().stacked();
  double drift = 0.0;
  for (const auto& x : t.states) drift = std::max(drift, (x.stacked() - x0).cwiseAbs().maxCoeff());
  EXPECT_LT(drift, 1e-8);
}

TEST(SimulateTruth, TrajectoryShape) {
  const Scenario s = load("case1_clean.scn");
  const Trajectory t = simulate_truth(ieee39(), s, params(s));
  ASSERT_EQ(t.times.size(), t.states.size());
  ASSERT_EQ(t.times.size(), t.frames.size());
  for (std::size_t k = 1; k < t.times.size(); ++k) {
    EXPECT_NEAR(t.times[k] - t.times[k - 1], s.dt, 1e-12);
    EXPECT_EQ(t.frames[k].timestamp, t.times[k]);
    EXPECT_EQ(t.frames[k].size(), 98);
  }
}

TEST(SimulateTruth, LoadDisturbanceStartsTheSwing) {
  const Scenario s = load("case1_clean.scn");
  const SystemParams sys = params(s);
  const Trajectory t = simulate_truth(ieee39(), s, sys);
  double before = 0.0;
  double after = 0.0;
  int sign_changes = 0;
  double prev = 0.0;
  for (std::size_t k = 0; k < t.times.size(); ++k) {
    const double dev = (t.states[k].omega.array() - sys.omega_s).abs().maxCoeff();
    if (t.times[k] <= 0.5 + 1e-9) before = std::max(before, dev);
    else after = std::max(after, dev);
    const double w4 = t.states[k].omega[3] - sys.omega_s;
    if (t.times[k] > 1.0 && prev * w4 < 0.0) ++sign_changes;
    prev = w4;
  }
  EXPECT_LT(before, 1e-8);
  EXPECT_GT(after, 1e-2);
  // An oscillation, not a single excursion.
  EXPECT_GE(sign_changes, 4);
}

TEST(SimulateTruth, IndependentOfMeasurementNoise) {
  Scenario a = load("case1_clean.scn");
  Scenario b = a;
  b.seed = 99;
  b.measurement_noise = 1e-2;
  const Trajectory ta = simulate_truth(ieee39(), a, params(a));
  const Trajectory tb = simulate_truth(ieee39(), b, params(b));
  for (std::size_t k = 0; k < ta.states.size(); ++k) {
    ASSERT_EQ(ta.states[k].stacked(), tb.states[k].stacked()) << "step " << k;
  }
}

TEST(SimulateTruth, PerturbedTruthIsSeedDeterministic) {
  Scenario s = quiet_scenario(1.0);
  s.perturb_truth = true;
  const Trajectory a = simulate_truth(ieee39(), s, params(s));
  const Trajectory b = simulate_truth(ieee39(), s, params(s));
  s.seed = 6;
  const Trajectory c = simulate_truth(ieee39(), s, params(s));
  EXPECT_EQ(a.states.back().stacked(), b.states.back().stacked());
  EXPECT_NE(a.states.back().stacked(), c.states.back().stacked());
}

TEST(SimulateTruth, DivergenceIsReported) {
  Scenario s = quiet_scenario(1.0);
  s.disturbance = {DisturbanceKind::MechPowerStep, 1, 1e308, 0.1, 0.5};
  try {
    simulate_truth(ieee39(), s, params(s));
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_STREQ(e.what(), "unstable trajectory");
  }
}

// ---------------------------------------------------------------------------
// Measurements

TEST(SynthesizeMeasurements, ZeroCovarianceReproducesFrames) {
  const Scenario s = load("case1_clean.scn");
  const Trajectory t = simulate_truth(ieee39(), s, params(s));
  const auto stream = synthesize_measurements(t, Matrix::Zero(98, 98), 1);
  ASSERT_EQ(stream.size(), t.frames.size());
  for (std::size_t k = 0; k < stream.size(); ++k) ASSERT_TRUE(frames_identical(stream[k], t.frames[k]));
}

TEST(SynthesizeMeasurements, ChannelVarianceMatchesR) {
  const Trajectory t = repeated_frame(10000);
  const auto stream = synthesize_measurements(t, 1e-4 * Matrix::Identity(98, 98), 2024);
  const Vector clean = t.frames[0].stacked();
  Vector sum = Vector::Zero(98);
  Vector sq = Vector::Zero(98);
  for (const auto& f : stream) {
    const Vector e = f.stacked() - clean;
    sum += e;
    sq += e.cwiseAbs2();
  }
  const double n = static_cast<double>(stream.size());
  for (int i = 0; i < 98; ++i) {
    const double var = (sq[i] - sum[i] * sum[i] / n) / (n - 1.0);
    EXPECT_GE(var, 0.9e-4) << "channel " << i;
    EXPECT_LE(var, 1.1e-4) << "channel " << i;
  }
}

TEST(SynthesizeMeasurements, CorrelatedNoiseHasTheRequestedCovariance) {
  const Trajectory t = repeated_frame(20000);
  Matrix r = 1e-4 * Matrix::Identity(98, 98);
  r(0, 1) = r(1, 0) = 0.5e-4;
  const auto stream = synthesize_measurements(t, r, 3);
  const Vector clean = t.frames[0].stacked();
  double c01 = 0.0;
  for (const auto& f : stream) {
    const Vector e = f.stacked() - clean;
    c01 += e[0] * e[1];
  }
  EXPECT_NEAR(c01 / static_cast<double>(stream.size()), 0.5e-4, 0.05e-4);
}

TEST(SynthesizeMeasurements, SeedDeterminism) {
  const Trajectory t = repeated_frame(50);
  const Matrix r = 1e-4 * Matrix::Identity(98, 98);
  const auto a = synthesize_measurements(t, r, 7);
  const auto b = synthesize_measurements(t, r, 7);
  const auto c = synthesize_measurements(t, r, 8);
  for (std::size_t k = 0; k < a.size(); ++k) ASSERT_TRUE(frames_identical(a[k], b[k]));
  EXPECT_NE(a[10].stacked(), c[10].stacked());
}

TEST(SynthesizeMeasurements, RejectsMismatchedCovariance) {
  const Trajectory t = repeated_frame(2);
  EXPECT_THROW(synthesize_measurements(t, Matrix::Identity(97, 97), 1), ConfigError);
}

// ---------------------------------------------------------------------------
// Faults

class FaultFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    const Scenario s = load("case1_clean.scn");
    truth_ = simulate_truth(ieee39(), s, params(s));
    stream_ = synthesize_measurements(truth_, 1e-4 * Matrix::Identity(98, 98), 11);
  }
  Trajectory truth_;
  std::vector<MeasurementFrame> stream_;
};

TEST_F(FaultFixture, CommLossZeroesChannelsInsideTheWindowOnly) {
  const Scenario s = load("case2_comm_loss.scn");
  const std::vector<int> lost = {channel_index("P5", ieee39()), channel_index("Q5", ieee39()),
                                 channel_index("V34", ieee39()), channel_index("theta34", ieee39())};
  const auto out = apply_faults(stream_, s);
  int inside = 0;
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double t = out[k].timestamp;
    if (t >= 4.0 - 1e-9 && t <= 6.0 + 1e-9) {
      ++inside;
      const Vector z = out[k].stacked();
      for (int c : lost) {
        EXPECT_EQ(z[c], 0.0);
        EXPECT_FALSE(out[k].valid[static_cast<std::size_t>(c)]);
      }
      const Vector before = stream_[k].stacked();
      for (int i = 0; i < 98; ++i) {
        if (std::find(lost.begin(), lost.end(), i) == lost.end()) EXPECT_EQ(z[i], before[i]);
      }
    } else {
      ASSERT_TRUE(frames_identical(out[k], stream_[k])) << "t = " << t;
    }
  }
  EXPECT_EQ(inside, 121);
}

TEST_F(FaultFixture, GrossErrorHoldsFromOnset) {
  const Scenario s = load("case3_bad_data.scn");
  const int q7 = channel_index("Q7", ieee39());
  const auto out = apply_faults(stream_, s);
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (out[k].timestamp >= 4.0 - 1e-9) {
      EXPECT_EQ(out[k].stacked()[q7], 10.0);
      EXPECT_TRUE(out[k].valid[static_cast<std::size_t>(q7)]);
    } else {
      ASSERT_TRUE(frames_identical(out[k], stream_[k]));
    }
  }
}

TEST_F(FaultFixture, GrossErrorWithEndIsWindowed) {
  const Scenario s = scenario_text("fault gross-error channels=V1 value=-3 start=2 end=3\n");
  const int v1 = channel_index("V1", ieee39());
  const auto out = apply_faults(stream_, s);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double t = out[k].timestamp;
    if (t >= 2.0 - 1e-9 && t <= 3.0 + 1e-9) EXPECT_EQ(out[k].stacked()[v1], -3.0);
    else ASSERT_TRUE(frames_identical(out[k], stream_[k]));
  }
}

TEST_F(FaultFixture, EmptyFaultListIsIdentity) {
  const auto out = apply_faults(stream_, quiet_scenario());
  for (std::size_t k = 0; k < out.size(); ++k) ASSERT_TRUE(frames_identical(out[k], stream_[k]));
}

TEST_F(FaultFixture, ApplicationIsIdempotent) {
  for (const char* file : {"case2_comm_loss.scn", "case3_bad_data.scn"}) {
    const Scenario s = load(file);
    const auto once = apply_faults(stream_, s);
    const auto twice = apply_faults(once, s);
    for (std::size_t k = 0; k < once.size(); ++k) ASSERT_TRUE(frames_identical(once[k], twice[k])) << file;
  }
}

TEST_F(FaultFixture, ExperimentStreamIsDeterministic) {
  const Scenario s = load("case3_bad_data.scn");
  const Experiment a = prepare_experiment(ieee39(), s);
  const Experiment b = prepare_experiment(ieee39(), s);
  ASSERT_EQ(a.stream.size(), b.stream.size());
  for (std::size_t k = 0; k < a.stream.size(); ++k) ASSERT_TRUE(frames_identical(a.stream[k], b.stream[k]));
}

// ---------------------------------------------------------------------------
// Error metric

TEST(OverallError, ZeroForExactEstimates) {
  std::vector<Vector> x = {Vector::Ones(4), Vector::Constant(4, 2.0)};
  EXPECT_EQ(overall_error(x, x), 0.0);
}

TEST(OverallError, ConstantOffsetGivesTheOffset) {
  std::vector<Vector> truth;
  std::vector<Vector> est;
  for (int k = 0; k < 30; ++k) {
    truth.push_back(Vector::Constant(20, 0.1 * k));
    est.push_back(truth.back().array() + ((k % 2) ? 0.003 : -0.003));
  }
  EXPECT_NEAR(overall_error(est, truth), 0.003, 1e-15);
}

TEST(OverallError, MatchesHandComputation) {
  std::vector<Vector> truth = {Vector::Zero(2), Vector::Zero(2)};
  std::vector<Vector> est = {(Vector(2) << 3.0, 0.0).finished(), (Vector(2) << 0.0, 4.0).finished()};
  EXPECT_DOUBLE_EQ(overall_error(est, truth), std::sqrt(25.0 / 4.0));
}

TEST(OverallError, RejectsMisalignedSequences) {
  std::vector<Vector> a = {Vector::Zero(2)};
  std::vector<Vector> b = {Vector::Zero(2), Vector::Zero(2)};
  EXPECT_THROW(overall_error(a, b), ConfigError);
  std::vector<Vector> c = {Vector::Zero(3)};
  EXPECT_THROW(overall_error(a, c), ConfigError);
}

TEST(OverallError, CleanCaseRegressionValue) {
  // Recorded from the first build of the shipped clean scenario (seed 42).
  const Experiment e = prepare_experiment(ieee39(), load("case1_clean.scn"));
  const FilterRun ekf = run_filter(e, FilterKind::Ekf, FilterSettings{}, RunOptions{false});
  EXPECT_NEAR(ekf.overall_error, 0.017159779614156254, 1e-9);
}

// ---------------------------------------------------------------------------
// Scenario files

TEST(ScenarioFile, ShippedScenariosParse) {
  const Scenario c1 = load("case1_clean.scn");
  EXPECT_EQ(c1.name, "case1_clean");
  EXPECT_EQ(c1.seed, 42u);
  EXPECT_EQ(c1.steps(), 600);
  EXPECT_EQ(c1.disturbance.kind, DisturbanceKind::LoadScale);
  EXPECT_EQ(c1.disturbance.target, 20);
  EXPECT_TRUE(c1.faults.empty());

  const Scenario c2 = load("case2_comm_loss.scn");
  ASSERT_EQ(c2.faults.size(), 1u);
  EXPECT_EQ(c2.faults[0].kind, FaultKind::CommLoss);
  EXPECT_EQ(c2.faults[0].channels.size(), 4u);
  EXPECT_EQ(c2.faults[0].t_start, 4.0);
  EXPECT_EQ(c2.faults[0].t_end, 6.0);

  const Scenario c3 = load("case3_bad_data.scn");
  ASSERT_EQ(c3.faults.size(), 1u);
  EXPECT_EQ(c3.faults[0].kind, FaultKind::GrossError);
  EXPECT_EQ(c3.faults[0].value, 10.0);
  EXPECT_TRUE(std::isinf(c3.faults[0].t_end));
  EXPECT_EQ(c3.plot_generators, std::vector<int>{7});
}

TEST(ScenarioFile, ErrorsNameTheLine) {
  auto message = [](const std::string& text) {
    std::istringstream in(text);
    try {
      parse_scenario(in, ieee39());
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_EQ(message(""), "empty scenario file");
  EXPECT_EQ(message("dse-scenario 2\n"), "scenario line 1: unsupported scenario version 2");
  EXPECT_EQ(message("dse-scenario 1\nbogus 1\n"), "scenario line 2: unknown directive 'bogus'");
  EXPECT_NE(message("dse-scenario 1\nfault comm-loss channels=X9 start=1 end=2\n").find("scenario line 2"),
            std::string::npos);
  EXPECT_EQ(message("dse-scenario 1\ndisturbance load-scale target=20 factor=2 start=1\n"),
            "scenario line 2: missing option 'end'");
}

TEST(ScenarioFile, RejectsInvalidWindows) {
  EXPECT_THROW(scenario_text("fault comm-loss channels=P1 start=5 end=4\n").validate(98), ConfigError);
  EXPECT_THROW(scenario_text("duration 2\ndisturbance load-scale target=20 factor=2 start=1 end=3\n").validate(98),
               ConfigError);
}

TEST(ScenarioFile, MissingFile) {
  try {
    load_scenario("/nonexistent/x.scn", ieee39());
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(std::string(e.what()), "scenario file not found: /nonexistent/x.scn");
  }
}

}  // namespace
}  // namespace dse
