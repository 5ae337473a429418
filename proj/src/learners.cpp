#include "posl/learners.hpp"

#include "posl/error.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace posl {

namespace {

constexpr double kJitter = 1e-8;

}  // namespace

std::string to_string(LearnerFamily family) {
    switch (family) {
        case LearnerFamily::LagLinear: return "lag_linear";
        case LearnerFamily::RidgeRls: return "ridge_rls";
        case LearnerFamily::ExpSmooth: return "exp_smooth";
        case LearnerFamily::GlobalMean: return "global_mean";
    }
    return "unknown";
}

std::string to_string(LearnerScope scope) {
    return scope == LearnerScope::Historical ? "historical" : "individual";
}

LearnerFamily parse_learner_family(const std::string& text) {
    for (auto f : {LearnerFamily::LagLinear, LearnerFamily::RidgeRls, LearnerFamily::ExpSmooth, LearnerFamily::GlobalMean}) {
        if (to_string(f) == text) return f;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown learner family '" + text + "'");
}

LearnerScope parse_learner_scope(const std::string& text) {
    if (text == "historical") return LearnerScope::Historical;
    if (text == "individual") return LearnerScope::Individual;
    throw Error(ErrorCode::InvalidArgument, "unknown learner scope '" + text + "'");
}

void validate(const LearnerSpec& spec) {
    const auto fail = [&](const std::string& msg) {
        throw Error(ErrorCode::InvalidArgument, "learner '" + spec.name + "': " + msg);
    };
    if (uses_summary(spec) && spec.summary.memory < 1) fail("lag order must be >= 1");
    if (spec.family == LearnerFamily::RidgeRls && !(spec.ridge_lambda >= 0.0)) fail("ridge penalty must be >= 0");
    if (spec.family == LearnerFamily::ExpSmooth) {
        if (!(spec.smoothing > 0.0 && spec.smoothing <= 1.0)) fail("smoothing factor must lie in (0, 1]");
        // The level is a per-subject state; a pooled level has no meaning for a new subject.
        if (spec.scope == LearnerScope::Historical) fail("exp_smooth is only available with individual scope");
    }
}

bool uses_summary(const LearnerSpec& spec) noexcept {
    return spec.family == LearnerFamily::LagLinear || spec.family == LearnerFamily::RidgeRls;
}

bool uses_baseline(const LearnerSpec& spec) noexcept {
    return uses_summary(spec) && spec.scope == LearnerScope::Historical;
}

int required_history(const LearnerSpec& spec) noexcept {
    if (!uses_summary(spec)) return 0;
    return spec.summary.kind == SummaryKind::LagWindow ? spec.summary.memory : 1;
}

std::optional<Row> make_row(const PanelRecord& record, const LearnerSpec& spec, Time t) {
    Row row;
    row.subject_id = record.subject_id;
    row.x = record.baseline;
    row.t = t;
    row.y = record.observed(t) ? record.y_at(t) : 0.0;
    if (uses_summary(spec)) {
        SummarySpec s = spec.summary;
        s.include_baseline = false;
        try {
            row.z = make_summary(record, s, t).values;
        } catch (const Error& e) {
            if (e.code() == ErrorCode::InsufficientHistory) return std::nullopt;
            throw;
        }
    }
    return row;
}

std::vector<Row> make_rows(const PanelRecord& record, const LearnerSpec& spec, Time from, Time to) {
    std::vector<Row> rows;
    if (record.empty()) return rows;
    from = std::max(from, record.first_time());
    to = std::min(to, record.last_time());
    for (Time t = from; t <= to; ++t) {
        if (auto row = make_row(record, spec, t)) rows.push_back(std::move(*row));
    }
    return rows;
}

Eigen::VectorXd FittedLearner::design(std::span<const double> x, std::span<const double> z) const {
    const bool with_x = uses_baseline(spec_);
    Eigen::VectorXd d(1 + z.size() + (with_x ? x.size() : 0));
    d(0) = 1.0;
    Eigen::Index k = 1;
    for (double v : z) d(k++) = v;
    if (with_x) {
        for (double v : x) d(k++) = v;
    }
    return d;
}

void FittedLearner::absorb(std::span<const Row> rows) {
    for (const auto& row : rows) {
        if (spec_.scope == LearnerScope::Individual) {
            if (subject_ && *subject_ != row.subject_id) {
                throw Error(ErrorCode::MixedSubjects, "individual learner '" + spec_.name + "' saw subjects " +
                                                          std::to_string(*subject_) + " and " +
                                                          std::to_string(row.subject_id));
            }
            subject_ = row.subject_id;
        }
        if (uses_summary(spec_)) {
            const std::size_t x_dim = uses_baseline(spec_) ? row.x.size() : 0;
            if (train_count_ == 0) {
                z_dim_ = row.z.size();
                x_dim_ = x_dim;
                const auto p = static_cast<Eigen::Index>(1 + z_dim_ + x_dim_);
                xtx_ = Eigen::MatrixXd::Zero(p, p);
                xty_ = Eigen::VectorXd::Zero(p);
            } else if (row.z.size() != z_dim_ || x_dim != x_dim_) {
                throw Error(ErrorCode::DimensionMismatch, "learner '" + spec_.name + "': feature length changed");
            }
        }
        switch (spec_.family) {
            case LearnerFamily::LagLinear:
                buffer_.push_back(row);
                if (spec_.buffer_limit > 0 && buffer_.size() > spec_.buffer_limit) buffer_.pop_front();
                break;
            case LearnerFamily::RidgeRls: {
                const Eigen::VectorXd d = design(row.x, row.z);
                xtx_.selfadjointView<Eigen::Lower>().rankUpdate(d);
                xty_ += row.y * d;
                break;
            }
            case LearnerFamily::ExpSmooth:
                level_ = train_count_ == 0 ? row.y : spec_.smoothing * row.y + (1.0 - spec_.smoothing) * level_;
                break;
            case LearnerFamily::GlobalMean:
                sum_y_ += row.y;
                break;
        }
        ++train_count_;
        trained_through_ = std::max(trained_through_, row.t);
    }
}

void FittedLearner::solve() {
    jittered_ = false;
    if (spec_.family == LearnerFamily::LagLinear) {
        const auto p = static_cast<Eigen::Index>(1 + z_dim_ + x_dim_);
        Eigen::MatrixXd a(static_cast<Eigen::Index>(buffer_.size()), p);
        Eigen::VectorXd b(a.rows());
        Eigen::Index i = 0;
        for (const auto& row : buffer_) {
            a.row(i) = design(row.x, row.z).transpose();
            b(i++) = row.y;
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
        if (qr.rank() == p) {
            coef_ = qr.solve(b);
        } else {
            jittered_ = true;
            const Eigen::MatrixXd g = a.transpose() * a + kJitter * Eigen::MatrixXd::Identity(p, p);
            coef_ = g.ldlt().solve(a.transpose() * b);
        }
        return;
    }
    if (spec_.family == LearnerFamily::RidgeRls) {
        Eigen::MatrixXd g = xtx_.selfadjointView<Eigen::Lower>();
        for (Eigen::Index k = 1; k < g.rows(); ++k) g(k, k) += spec_.ridge_lambda;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(g);
        if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-13)) {
            jittered_ = true;
            g += kJitter * Eigen::MatrixXd::Identity(g.rows(), g.cols());
            ldlt.compute(g);
        }
        coef_ = ldlt.solve(xty_);
    }
}

FittedLearner fit(const LearnerSpec& spec, std::span<const Row> train) {
    validate(spec);
    if (train.empty()) throw Error(ErrorCode::InvalidArgument, "learner '" + spec.name + "': empty training set");
    FittedLearner f;
    f.spec_ = spec;
    std::vector<Row> ordered(train.begin(), train.end());
    std::stable_sort(ordered.begin(), ordered.end(), [](const Row& a, const Row& b) { return a.t < b.t; });
    f.absorb(ordered);
    f.solve();
    return f;
}

FittedLearner update(const FittedLearner& f, std::span<const Row> batch) {
    if (batch.empty()) return f;
    for (const auto& row : batch) {
        if (row.t <= f.trained_through_) {
            throw Error(ErrorCode::StaleBatch, "learner '" + f.spec_.name + "': row at t=" + std::to_string(row.t) +
                                                   " is not after t=" + std::to_string(f.trained_through_));
        }
    }
    FittedLearner next = f;
    std::vector<Row> ordered(batch.begin(), batch.end());
    std::stable_sort(ordered.begin(), ordered.end(), [](const Row& a, const Row& b) { return a.t < b.t; });
    next.absorb(ordered);
    next.solve();
    return next;
}

double predict(const FittedLearner& f, std::span<const double> x, std::span<const double> z, Time /*t*/) {
    switch (f.spec_.family) {
        case LearnerFamily::GlobalMean: return f.sum_y_ / static_cast<double>(f.train_count_);
        case LearnerFamily::ExpSmooth: return f.level_;
        default: break;
    }
    const std::size_t x_dim = uses_baseline(f.spec_) ? x.size() : 0;
    if (z.size() != f.z_dim_ || x_dim != f.x_dim_) {
        throw Error(ErrorCode::DimensionMismatch, "learner '" + f.spec_.name + "' expects " +
                                                      std::to_string(f.z_dim_) + " summary values and " +
                                                      std::to_string(f.x_dim_) + " baseline values");
    }
    return f.design(x, z).dot(f.coef_);
}

double predict(const FittedLearner& f, const Row& row) { return predict(f, row.x, row.z, row.t); }

std::vector<double> forecast_recursive(const FittedLearner& f, const PanelRecord& record, int horizon) {
    if (horizon < 1) throw Error(ErrorCode::InvalidArgument, "forecast horizon must be >= 1");
    if (record.empty()) throw Error(ErrorCode::InsufficientHistory, "cannot forecast an empty record");
    PanelRecord extended = record;
    extended.exit_time.reset();
    const std::vector<double> last_w = record.covariates.back();
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(horizon));
    for (int step = 1; step <= horizon; ++step) {
        const Time t = extended.last_time() + 1;
        const auto row = make_row(extended, f.spec(), t);
        if (!row) {
            throw Error(ErrorCode::InsufficientHistory, "subject " + std::to_string(record.subject_id) +
                                                            " lacks history for learner '" + f.spec().name + "'");
        }
        const double yhat = predict(f, *row);
        out.push_back(yhat);
        extended.append(t, last_w, yhat);
    }
    return out;
}

void write_coefficients_csv(std::ostream& out, const std::vector<FittedLearner>& learners) {
    out << "learner,term,value\n";
    out.precision(17);
    for (const auto& f : learners) {
        const auto& c = f.coefficients();
        for (Eigen::Index k = 0; k < c.size(); ++k) {
            std::string term = "intercept";
            if (k > 0 && static_cast<std::size_t>(k) <= f.z_dim()) {
                term = "z" + std::to_string(k);
            } else if (k > 0) {
                term = "x" + std::to_string(static_cast<std::size_t>(k) - f.z_dim());
            }
            out << f.spec().name << ',' << term << ',' << c(k) << '\n';
        }
    }
}

}  // namespace posl
