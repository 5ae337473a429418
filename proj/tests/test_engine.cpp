#include "posl/engine.hpp"

#include "helpers.hpp"

#include <cmath>
#include <sstream>

using namespace posl;
using test::code_of;

namespace {

LearnerSpec learner(const std::string& name, LearnerFamily family, LearnerScope scope, int lags = 2) {
    LearnerSpec s;
    s.name = name;
    s.family = family;
    s.scope = scope;
    s.summary = SummarySpec{SummaryKind::LagWindow, lags, false, true};
    s.ridge_lambda = 1.0;
    return s;
}

EngineConfig small_config() {
    EngineConfig c;
    c.warmup = 20;
    c.fold_spec.first_window = 5;
    c.fold_spec.validation_size = 2;
    c.fold_spec.batch = 5;
    c.fold_spec.gap = 0;
    c.learners = {learner("h_ridge", LearnerFamily::RidgeRls, LearnerScope::Historical),
                  learner("h_mean", LearnerFamily::GlobalMean, LearnerScope::Historical),
                  learner("i_ridge", LearnerFamily::RidgeRls, LearnerScope::Individual),
                  learner("i_mean", LearnerFamily::GlobalMean, LearnerScope::Individual)};
    return c;
}

PanelRecord shell(const PanelRecord& r) {
    PanelRecord s;
    s.subject_id = r.subject_id;
    s.baseline = r.baseline;
    s.entry_time = r.entry_time;
    s.exit_time = r.exit_time;
    return s;
}

}  // namespace

TEST_CASE("init fits historical learners only") {
    const auto sim = build_simulation(1, 30, 120, 3);
    const Engine e(sim.historical, {shell(sim.target)}, small_config());
    CHECK(e.clock() == 0);
    CHECK(e.historical_fits()[0].has_value());
    CHECK(e.historical_fits()[1].has_value());
    CHECK_FALSE(e.historical_fits()[2].has_value());
    CHECK(e.risk_table().overall("h_ridge").weight == 0.0);
}

TEST_CASE("engine without targets") {
    const auto sim = build_simulation(1, 3, 60, 3);
    Engine e(sim.historical, {}, small_config());
    const auto out = e.step({}, 5);
    CHECK(out.forecasts.empty());
    CHECK(e.clock() == 5);
}

TEST_CASE("warmup below the largest lag is rejected") {
    auto c = small_config();
    c.learners[2].summary.memory = 30;
    const auto sim = build_simulation(1, 3, 60, 3);
    CHECK(code_of([&] { Engine(sim.historical, {shell(sim.target)}, c); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("before warmup all weight is on historical learners") {
    const auto sim = build_simulation(1, 10, 100, 4);
    Engine e(sim.historical, {shell(sim.target)}, small_config());
    for (const auto& batch : make_batches(sim.target, 5)) {
        const auto out = e.step(batch);
        CHECK(e.risk_table().last_updated() == e.clock());
        CHECK(out.forecasts.size() == 5);
        for (const auto& f : out.forecasts) CHECK(std::isfinite(f.yhat));
        double sum = 0.0;
        for (double a : out.weights.alpha) sum += a;
        CHECK(std::abs(sum - 1.0) < 1e-8);
        if (e.clock() < 20) CHECK(e.individual_mass(out.weights) == 0.0);
    }
}

TEST_CASE("a lone historical learner takes all the weight") {
    auto c = small_config();
    c.learners = {learner("h_ridge", LearnerFamily::RidgeRls, LearnerScope::Historical)};
    const auto sim = build_simulation(1, 5, 80, 4);
    Engine e(sim.historical, {shell(sim.target)}, c);
    for (const auto& batch : make_batches(sim.target, 5)) {
        const auto out = e.step(batch);
        CHECK(out.weights.alpha == std::vector<double>{1.0});
    }
}

TEST_CASE("identical learners tie and the first registered wins") {
    auto c = small_config();
    c.mode = WeightMode::Discrete;
    c.learners = {learner("a", LearnerFamily::RidgeRls, LearnerScope::Historical),
                  learner("b", LearnerFamily::RidgeRls, LearnerScope::Historical)};
    const auto sim = build_simulation(1, 5, 80, 6);
    Engine e(sim.historical, {shell(sim.target)}, c);
    for (const auto& batch : make_batches(sim.target, 5)) e.step(batch);
    CHECK(mean_risk(e.risk_table(), "a") == mean_risk(e.risk_table(), "b"));
    CHECK(e.weights().alpha == std::vector<double>{1.0, 0.0});
}

TEST_CASE("stale batches are rejected") {
    const auto sim = build_simulation(1, 3, 60, 3);
    Engine e(sim.historical, {shell(sim.target)}, small_config());
    const auto batches = make_batches(sim.target, 5);
    e.step(batches[0]);
    CHECK(code_of([&] { e.step(batches[0]); }) == ErrorCode::StaleBatch);
}

TEST_CASE("a run is reproducible") {
    const auto sim = build_simulation(2, 5, 80, 8);
    const auto run = [&] {
        Engine e(sim.historical, {shell(sim.target)}, small_config());
        std::ostringstream out;
        bool header = true;
        for (const auto& batch : make_batches(sim.target, 5)) {
            write_forecasts_csv(out, e.step(batch).forecasts, nullptr, header);
            header = false;
        }
        return out.str();
    };
    CHECK(run() == run());
}

TEST_CASE("oracle report") {
    const auto sim = build_simulation(1, 5, 100, 2);
    Engine e(sim.historical, {shell(sim.target)}, small_config());
    for (const auto& batch : make_batches(sim.target, 5)) e.step(batch);
    const auto report = oracle_eval(e, sim.truth);
    REQUIRE_FALSE(report.steps.empty());
    for (const auto& s : report.steps) CHECK(s.ratio >= 1.0);
    CHECK(code_of([&] { oracle_eval(e, TruthTrace{}); }) == ErrorCode::MissingTruth);
}

TEST_CASE("group candidates combine their members") {
    auto c = small_config();
    c.group_candidates = true;
    const auto sim = build_simulation(1, 10, 100, 4);
    Engine e(sim.historical, {shell(sim.target)}, c);
    REQUIRE(e.learner_ids().size() == 6);
    CHECK(e.learner_ids()[4] == kHistoricalGroup);
    CHECK(e.learner_ids()[5] == kIndividualGroup);
    CHECK(e.is_individual(5));
    CHECK_FALSE(e.is_individual(4));
    for (const auto& batch : make_batches(sim.target, 5)) {
        const auto out = e.step(batch);
        double sum = 0.0;
        for (double a : out.weights.alpha) sum += a;
        CHECK(std::abs(sum - 1.0) < 1e-8);
        CHECK(out.forecasts.size() == 5);
    }
    // Each group prediction lies within the range of its members.
    for (const auto& entry : e.validation_log()) {
        if (std::isnan(entry.preds[4])) continue;
        const double lo = std::min(entry.preds[0], entry.preds[1]);
        const double hi = std::max(entry.preds[0], entry.preds[1]);
        CHECK(entry.preds[4] >= lo - 1e-9);
        CHECK(entry.preds[4] <= hi + 1e-9);
    }
    CHECK(e.risk_table().overall(kIndividualGroup).weight > 0.0);

    auto clash = small_config();
    clash.group_candidates = true;
    clash.learners[0].name = kHistoricalGroup;
    CHECK(code_of([&] { validate(clash); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("group candidates are off by default") {
    const auto sim = build_simulation(1, 3, 60, 3);
    const Engine e(sim.historical, {shell(sim.target)}, small_config());
    CHECK(e.learner_ids().size() == 4);
}
