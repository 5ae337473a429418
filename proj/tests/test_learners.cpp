#include "posl/learners.hpp"

#include "helpers.hpp"

#include <Eigen/Dense>

#include <random>
#include <sstream>

using namespace posl;
using test::code_of;
using test::series;

namespace {

LearnerSpec make(LearnerFamily family, LearnerScope scope, int lags = 1, double lambda = 0.0) {
    LearnerSpec s;
    s.name = "l";
    s.family = family;
    s.scope = scope;
    s.summary = SummarySpec{SummaryKind::LagWindow, lags, false, true};
    s.ridge_lambda = lambda;
    return s;
}

PanelRecord ar1(double start, double coef, int n) {
    std::vector<double> y{start};
    for (int k = 1; k < n; ++k) y.push_back(coef * y.back());
    return series(1, y);
}

PanelRecord noisy(SubjectId id, int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> e(0.0, 1.0);
    std::vector<double> y{0.0, 0.0};
    for (int k = 2; k < n; ++k) y.push_back(1.0 + 0.5 * y[k - 1] - 0.2 * y[k - 2] + e(rng));
    return series(id, y);
}

}  // namespace

TEST_CASE("global mean") {
    const auto spec = make(LearnerFamily::GlobalMean, LearnerScope::Historical);
    const auto rows = make_rows(series(1, {1, 2, 3}), spec, 1, 3);
    const auto f = fit(spec, rows);
    CHECK(predict(f, {}, {}, 99) == doctest::Approx(2.0));
    const auto g = update(f, make_rows(series(1, {1, 2, 3, 5}), spec, 4, 4));
    CHECK(predict(g, {}, {}, 99) == doctest::Approx(2.75));
    CHECK(forecast_recursive(f, series(1, {1, 2, 3}), 5) == std::vector<double>(5, predict(f, {}, {}, 4)));
}

TEST_CASE("lag linear recovers a noiseless AR(1)") {
    const auto spec = make(LearnerFamily::LagLinear, LearnerScope::Individual, 1);
    const auto rec = ar1(1000.0, 0.5, 50);
    const auto f = fit(spec, make_rows(rec, spec, 1, 50));
    REQUIRE(f.coefficients().size() == 2);
    CHECK(f.coefficients()[1] == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(std::abs(predict(f, {}, std::vector<double>{4.0}, 51) - 2.0) < 1e-6);
}

TEST_CASE("recursive forecast of the AR(1) by hand") {
    const auto spec = make(LearnerFamily::LagLinear, LearnerScope::Individual, 1);
    const auto f = fit(spec, make_rows(ar1(1000.0, 0.5, 50), spec, 1, 50));
    const auto out = forecast_recursive(f, series(1, {16, 8}), 5);
    const std::vector<double> expect{4, 2, 1, 0.5, 0.25};
    for (std::size_t k = 0; k < 5; ++k) CHECK(std::abs(out[k] - expect[k]) < 1e-6);
    const auto one = forecast_recursive(f, series(1, {16, 8}), 1);
    CHECK(one[0] == predict(f, {}, std::vector<double>{8.0}, 3));
}

TEST_CASE("lag linear recovers AR(3) coefficients from 10p points") {
    const std::vector<double> a{0.5, -0.3, 0.2};
    std::vector<double> y{1.0, -2.0, 0.5};
    for (int k = 3; k < 30; ++k) y.push_back(0.7 + a[0] * y[k - 1] + a[1] * y[k - 2] + a[2] * y[k - 3]);
    const auto spec = make(LearnerFamily::LagLinear, LearnerScope::Individual, 3);
    const auto f = fit(spec, make_rows(series(1, y), spec, 1, 30));
    const auto& c = f.coefficients();
    CHECK(std::abs(c[0] - 0.7) < 1e-6);
    // Z is ordered oldest lag first.
    CHECK(std::abs(c[3] - a[0]) < 1e-6);
    CHECK(std::abs(c[2] - a[1]) < 1e-6);
    CHECK(std::abs(c[1] - a[2]) < 1e-6);
}

TEST_CASE("ridge matches the normal equations and segmented updates") {
    const auto spec = make(LearnerFamily::RidgeRls, LearnerScope::Individual, 2, 3.0);
    const auto rec = noisy(1, 80, 5);
    const auto rows = make_rows(rec, spec, 1, 80);
    const auto f = fit(spec, rows);

    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), 3);
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        X(r, 0) = 1.0;
        X(r, 1) = rows[i].z[0];
        X(r, 2) = rows[i].z[1];
        y(r) = rows[i].y;
    }
    // Penalty on the slopes only.
    Eigen::MatrixXd P = Eigen::MatrixXd::Identity(3, 3) * 3.0;
    P(0, 0) = 0.0;
    const Eigen::VectorXd beta = (X.transpose() * X + P).ldlt().solve(X.transpose() * y);
    CHECK((f.coefficients() - beta).cwiseAbs().maxCoeff() < 1e-8);

    const std::span<const Row> all(rows);
    const auto g = update(fit(spec, all.subspan(0, 30)), all.subspan(30));
    CHECK((g.coefficients() - f.coefficients()).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(g.trained_through() == f.trained_through());
    CHECK(g.train_count() == f.train_count());
}

TEST_CASE("heavy ridge shrinks to the intercept") {
    const auto spec = make(LearnerFamily::RidgeRls, LearnerScope::Historical, 2, 1e12);
    const auto rec = noisy(1, 100, 9);
    const auto rows = make_rows(rec, spec, 1, 100);
    const auto f = fit(spec, rows);
    double mean = 0.0;
    for (const auto& r : rows) mean += r.y;
    mean /= static_cast<double>(rows.size());
    CHECK(std::abs(f.coefficients()[1]) < 1e-6);
    CHECK(std::abs(f.coefficients()[2]) < 1e-6);
    CHECK(f.coefficients()[0] == doctest::Approx(mean).epsilon(1e-6));
}

TEST_CASE("exp smooth") {
    auto spec = make(LearnerFamily::ExpSmooth, LearnerScope::Individual);
    spec.smoothing = 1.0;
    const auto f = fit(spec, make_rows(series(1, {3, 9, 4}), spec, 1, 3));
    CHECK(predict(f, {}, {}, 4) == 4.0);
    spec.smoothing = 0.5;
    const auto g = fit(spec, make_rows(series(1, {2, 4, 8}), spec, 1, 3));
    // Level starts at the first value: 2, then 3, then 5.5.
    CHECK(predict(g, {}, {}, 4) == doctest::Approx(5.5));
    spec.scope = LearnerScope::Historical;
    CHECK(code_of([&] { validate(spec); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("update contract") {
    const auto spec = make(LearnerFamily::GlobalMean, LearnerScope::Individual);
    const auto rows = make_rows(series(1, {1, 2, 3}), spec, 1, 3);
    const auto f = fit(spec, rows);
    const auto same = update(f, std::span<const Row>{});
    CHECK(predict(same, {}, {}, 5) == predict(f, {}, {}, 5));
    CHECK(same.trained_through() == f.trained_through());
    CHECK(code_of([&] { update(f, std::span<const Row>(rows).subspan(2)); }) == ErrorCode::StaleBatch);
}

TEST_CASE("individual scope rejects mixed subjects") {
    const auto spec = make(LearnerFamily::GlobalMean, LearnerScope::Individual);
    auto rows = make_rows(series(1, {1, 2}), spec, 1, 2);
    const auto other = make_rows(series(2, {3}, 3), spec, 3, 3);
    rows.insert(rows.end(), other.begin(), other.end());
    CHECK(code_of([&] { fit(spec, rows); }) == ErrorCode::MixedSubjects);
    CHECK(code_of([&] { fit(spec, std::vector<Row>{}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("prediction dimension check") {
    const auto spec = make(LearnerFamily::LagLinear, LearnerScope::Individual, 2);
    const auto f = fit(spec, make_rows(noisy(1, 30, 2), spec, 1, 30));
    CHECK(code_of([&] { predict(f, {}, std::vector<double>{1.0}, 31); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("collinear design is resolved with jitter") {
    const auto spec = make(LearnerFamily::LagLinear, LearnerScope::Individual, 1);
    const auto f = fit(spec, make_rows(series(1, {2, 2, 2, 2, 2}), spec, 1, 5));
    CHECK(f.jittered());
    CHECK(std::isfinite(predict(f, {}, std::vector<double>{2.0}, 6)));
    CHECK(predict(f, {}, std::vector<double>{2.0}, 6) == doctest::Approx(2.0));
}

TEST_CASE("lag linear buffer limit refits on recent rows") {
    auto spec = make(LearnerFamily::LagLinear, LearnerScope::Individual, 1);
    spec.buffer_limit = 20;
    const auto rec = noisy(1, 100, 3);
    const auto rows = make_rows(rec, spec, 1, 100);
    const std::span<const Row> all(rows);
    const auto online = update(fit(spec, all.subspan(0, 50)), all.subspan(50));
    const auto recent = fit(spec, all.subspan(rows.size() - 20));
    CHECK((online.coefficients() - recent.coefficients()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("historical learners use the baseline, individual ones ignore it") {
    auto spec = make(LearnerFamily::LagLinear, LearnerScope::Historical, 1);
    PanelRecord r = noisy(1, 20, 4);
    r.baseline = {1.0, 2.0};
    const auto row = make_row(r, spec, 10);
    REQUIRE(row);
    CHECK(row->x == r.baseline);
    CHECK(uses_baseline(spec));
    CHECK_FALSE(make_row(r, spec, 1));
    spec.scope = LearnerScope::Individual;
    CHECK_FALSE(uses_baseline(spec));
    const auto f = fit(spec, make_rows(r, spec, 1, 20));
    CHECK(f.coefficients().size() == 2);
}

TEST_CASE("individual predictions ignore other subjects") {
    const auto spec = make(LearnerFamily::RidgeRls, LearnerScope::Individual, 2, 1.0);
    const auto a = noisy(1, 60, 11);
    const auto f = fit(spec, make_rows(a, spec, 1, 60));
    const auto g = fit(spec, make_rows(a, spec, 1, 60));
    const auto q = make_row(a, spec, 60);
    CHECK(predict(f, *q) == predict(g, *q));
    CHECK(predict(f, *q) == predict(f, *q));
}

TEST_CASE("coefficient export") {
    const auto spec = make(LearnerFamily::LagLinear, LearnerScope::Individual, 1);
    const auto f = fit(spec, make_rows(ar1(10.0, 0.5, 20), spec, 1, 20));
    std::ostringstream out;
    write_coefficients_csv(out, {f});
    CHECK(out.str().rfind("learner,term,value\nl,intercept,", 0) == 0);
}
