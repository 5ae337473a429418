#include "posl/selector.hpp"

#include "posl/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace posl {

std::string to_string(WeightMode mode) {
    switch (mode) {
        case WeightMode::Discrete: return "discrete";
        case WeightMode::Convex: return "convex";
        case WeightMode::Conditional: return "conditional";
    }
    return "unknown";
}

WeightMode parse_weight_mode(const std::string& text) {
    for (auto m : {WeightMode::Discrete, WeightMode::Convex, WeightMode::Conditional}) {
        if (to_string(m) == text) return m;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown weight mode '" + text + "'");
}

namespace {

std::vector<double> softmax(const Eigen::VectorXd& scores) {
    const double top = scores.maxCoeff();
    std::vector<double> out(static_cast<std::size_t>(scores.size()));
    double total = 0.0;
    for (Eigen::Index k = 0; k < scores.size(); ++k) {
        out[static_cast<std::size_t>(k)] = std::exp(scores(k) - top);
        total += out[static_cast<std::size_t>(k)];
    }
    for (double& a : out) a /= total;
    return out;
}

Eigen::VectorXd standardized(const EnsembleWeights& w, std::span<const double> x) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(1 + w.x_center.size()));
    v(0) = 1.0;
    for (std::size_t j = 0; j < w.x_center.size(); ++j) {
        v(static_cast<Eigen::Index>(j + 1)) = (x[j] - w.x_center[j]) / w.x_scale[j];
    }
    return v;
}

void check_design(const MetaDesign& design) {
    if (design.learners.empty()) throw Error(ErrorCode::InvalidArgument, "meta design has no learners");
    for (const auto& row : design.rows) {
        if (row.preds.size() != design.learners.size()) {
            throw Error(ErrorCode::DimensionMismatch, "meta row has " + std::to_string(row.preds.size()) +
                                                          " predictions for " + std::to_string(design.learners.size()) +
                                                          " learners");
        }
        if (!(row.weight >= 0.0 && row.weight <= 1.0)) throw Error(ErrorCode::InvalidArgument, "meta row weight outside [0, 1]");
    }
}

}  // namespace

std::vector<double> EnsembleWeights::alpha_at(std::span<const double> x) const {
    if (mode != WeightMode::Conditional) return alpha;
    if (x.size() != x_center.size()) {
        throw Error(ErrorCode::DimensionMismatch, "conditional weights expect " + std::to_string(x_center.size()) +
                                                      " baseline covariates");
    }
    return softmax(beta * standardized(*this, x));
}

double EnsembleWeights::weight_of(const std::string& learner) const {
    const auto it = std::find(learners.begin(), learners.end(), learner);
    return it == learners.end() ? 0.0 : alpha[static_cast<std::size_t>(it - learners.begin())];
}

EnsembleWeights one_hot(const std::vector<std::string>& learners, const std::string& chosen) {
    EnsembleWeights w;
    w.mode = WeightMode::Discrete;
    w.learners = learners;
    w.alpha.assign(learners.size(), 0.0);
    const auto it = std::find(learners.begin(), learners.end(), chosen);
    if (it == learners.end()) throw Error(ErrorCode::InvalidArgument, "unknown learner '" + chosen + "'");
    w.alpha[static_cast<std::size_t>(it - learners.begin())] = 1.0;
    return w;
}

EnsembleWeights uniform(const std::vector<std::string>& learners) {
    if (learners.empty()) throw Error(ErrorCode::InvalidArgument, "no learners to weight");
    EnsembleWeights w;
    w.mode = WeightMode::Convex;
    w.learners = learners;
    w.alpha.assign(learners.size(), 1.0 / static_cast<double>(learners.size()));
    return w;
}

std::string discrete_select(const RiskTable& table, std::optional<Time> m, std::span<const std::string> candidates) {
    const std::vector<std::string> pool =
        candidates.empty() ? table.learners() : std::vector<std::string>(candidates.begin(), candidates.end());
    std::vector<std::pair<std::size_t, std::string>> ordered;
    for (const auto& id : pool) {
        if (table.contains(id)) ordered.emplace_back(table.registration_index(id), id);
    }
    std::sort(ordered.begin(), ordered.end());

    std::optional<std::string> best;
    double best_risk = 0.0;
    for (const auto& [index, id] : ordered) {
        const RiskCell cell = m ? table.at(id, *m) : table.overall(id);
        if (!(cell.weight > 0.0)) continue;
        const double r = cell.weighted_loss / cell.weight;
        if (!best || r < best_risk - 1e-12) {
            best = id;
            best_risk = r;
        }
    }
    if (!best) {
        throw Error(ErrorCode::NoMass, "no candidate has loss mass" + (m ? " at m=" + std::to_string(*m) : std::string()));
    }
    return *best;
}

double meta_objective(const MetaDesign& design, std::span<const double> alpha) {
    double total = 0.0;
    for (const auto& row : design.rows) {
        double yhat = 0.0;
        for (std::size_t k = 0; k < alpha.size(); ++k) yhat += alpha[k] * row.preds[k];
        total += squared_error(row.y, yhat, row.weight);
    }
    return total;
}

EnsembleWeights nnls_weights(const MetaDesign& design) {
    check_design(design);
    const auto k_count = static_cast<Eigen::Index>(design.learners.size());

    // Quadratic form: f(a) = a'Ga - 2b'a + c.
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(k_count, k_count);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(k_count);
    double c = 0.0;
    double mass = 0.0;
    for (const auto& row : design.rows) {
        if (row.weight <= 0.0) continue;
        const Eigen::Map<const Eigen::VectorXd> p(row.preds.data(), k_count);
        g.selfadjointView<Eigen::Lower>().rankUpdate(p, row.weight);
        b += row.weight * row.y * p;
        c += row.weight * row.y * row.y;
        mass += row.weight;
    }
    if (!(mass > 0.0)) throw Error(ErrorCode::DegenerateDesign, "meta design has no weighted rows");
    g = g.selfadjointView<Eigen::Lower>();
    if (!g.allFinite() || !b.allFinite()) throw Error(ErrorCode::NonFinite, "meta design has non-finite predictions");

    EnsembleWeights out;
    out.mode = WeightMode::Convex;
    out.learners = design.learners;
    if (k_count == 1) {
        out.alpha = {1.0};
        return out;
    }

    const auto objective = [&](const Eigen::VectorXd& a) { return a.dot(g * a) - 2.0 * b.dot(a) + c; };

    // Primal active set on the simplex, started from the best vertex so every accepted
    // iterate improves on all vertices.
    Eigen::Index start = 0;
    for (Eigen::Index k = 1; k < k_count; ++k) {
        if (g(k, k) - 2.0 * b(k) < g(start, start) - 2.0 * b(start)) start = k;
    }
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(k_count);
    alpha(start) = 1.0;
    std::vector<bool> active(static_cast<std::size_t>(k_count), false);
    active[static_cast<std::size_t>(start)] = true;

    const double scale = std::max({1.0, g.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()});
    const double tol = 1e-12 * scale;

    // Equality-constrained minimizer over the active coordinates.
    const auto solve_face = [&]() {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index k = 0; k < k_count; ++k) {
            if (active[static_cast<std::size_t>(k)]) idx.push_back(k);
        }
        const auto n = static_cast<Eigen::Index>(idx.size());
        Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + 1, n + 1);
        Eigen::VectorXd rhs(n + 1);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) kkt(i, j) = g(idx[i], idx[j]);
            kkt(i, n) = 1.0;
            kkt(n, i) = 1.0;
            rhs(i) = b(idx[i]);
        }
        rhs(n) = 1.0;
        const Eigen::VectorXd sol = kkt.completeOrthogonalDecomposition().solve(rhs);
        Eigen::VectorXd z = Eigen::VectorXd::Zero(k_count);
        for (Eigen::Index i = 0; i < n; ++i) z(idx[i]) = sol(i);
        return z;
    };

    const int max_outer = 50 * static_cast<int>(k_count) + 50;
    for (int outer = 0; outer < max_outer; ++outer) {
        // Gradient (halved) and the common value on the active face.
        const Eigen::VectorXd grad = g * alpha - b;
        double face = 0.0;
        int n_active = 0;
        for (Eigen::Index k = 0; k < k_count; ++k) {
            if (active[static_cast<std::size_t>(k)]) {
                face += grad(k);
                ++n_active;
            }
        }
        face /= n_active;
        Eigen::Index enter = -1;
        double most = -tol;
        for (Eigen::Index k = 0; k < k_count; ++k) {
            if (active[static_cast<std::size_t>(k)]) continue;
            const double gap = grad(k) - face;
            if (gap < most) {
                most = gap;
                enter = k;
            }
        }
        if (enter < 0) break;
        active[static_cast<std::size_t>(enter)] = true;

        bool progressed = false;
        for (int inner = 0; inner <= k_count; ++inner) {
            const Eigen::VectorXd z = solve_face();
            bool feasible = true;
            double theta = 1.0;
            for (Eigen::Index k = 0; k < k_count; ++k) {
                if (!active[static_cast<std::size_t>(k)] || z(k) > 0.0) continue;
                feasible = false;
                const double denom = alpha(k) - z(k);
                if (denom > 0.0) theta = std::min(theta, alpha(k) / denom);
            }
            if (feasible) {
                if (objective(z) <= objective(alpha)) {
                    alpha = z;
                    progressed = true;
                }
                break;
            }
            const Eigen::VectorXd next = alpha + theta * (z - alpha);
            if (objective(next) <= objective(alpha)) {
                alpha = next;
                progressed = progressed || theta > 0.0;
            }
            for (Eigen::Index k = 0; k < k_count; ++k) {
                if (active[static_cast<std::size_t>(k)] && alpha(k) <= 1e-15) {
                    active[static_cast<std::size_t>(k)] = false;
                    alpha(k) = 0.0;
                }
            }
        }
        if (!progressed) break;
    }

    alpha = alpha.cwiseMax(0.0);
    alpha /= alpha.sum();
    out.alpha.assign(alpha.data(), alpha.data() + k_count);
    return out;
}

double conditional_objective(const MetaDesign& design, const EnsembleWeights& weights) {
    double total = 0.0;
    double mass = 0.0;
    for (const auto& row : design.rows) {
        total += squared_error(row.y, combine(weights, row.preds, row.x), row.weight);
        mass += row.weight;
    }
    return mass > 0.0 ? total / mass : 0.0;
}

EnsembleWeights fit_conditional(const MetaDesign& design, const ConditionalConfig& config) {
    check_design(design);
    if (design.learners.size() < 2) throw Error(ErrorCode::InvalidArgument, "conditional meta-learner needs >= 2 learners");
    if (config.iterations < 0 || !(config.step > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "conditional optimizer needs iterations >= 0 and step > 0");
    }
    double mass = 0.0;
    for (const auto& row : design.rows) mass += row.weight;
    if (!(mass > 0.0)) throw Error(ErrorCode::DegenerateDesign, "meta design has no weighted rows");

    const std::size_t p = design.rows.front().x.size();
    EnsembleWeights w;
    w.mode = WeightMode::Conditional;
    w.learners = design.learners;
    w.x_center.assign(p, 0.0);
    w.x_scale.assign(p, 1.0);
    for (const auto& row : design.rows) {
        if (row.x.size() != p) throw Error(ErrorCode::DimensionMismatch, "baseline covariate length varies across rows");
        for (std::size_t j = 0; j < p; ++j) w.x_center[j] += row.x[j] / static_cast<double>(design.rows.size());
    }
    for (std::size_t j = 0; j < p; ++j) {
        double ss = 0.0;
        for (const auto& row : design.rows) ss += (row.x[j] - w.x_center[j]) * (row.x[j] - w.x_center[j]);
        const double sd = std::sqrt(ss / static_cast<double>(design.rows.size()));
        w.x_scale[j] = sd > 0.0 ? sd : 1.0;
    }
    const auto k_count = static_cast<Eigen::Index>(design.learners.size());
    w.beta = Eigen::MatrixXd::Zero(k_count, static_cast<Eigen::Index>(1 + p));
    w.alpha.assign(design.learners.size(), 1.0 / static_cast<double>(design.learners.size()));

    const auto check = [](double v) {
        if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "conditional objective is not finite; rescale covariates");
        return v;
    };
    double current = check(conditional_objective(design, w));
    double step = config.step;
    for (int it = 0; it < config.iterations; ++it) {
        Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(w.beta.rows(), w.beta.cols());
        for (const auto& row : design.rows) {
            if (row.weight <= 0.0) continue;
            const Eigen::VectorXd xs = standardized(w, row.x);
            const auto a = softmax(w.beta * xs);
            double yhat = 0.0;
            for (std::size_t k = 0; k < a.size(); ++k) yhat += a[k] * row.preds[k];
            const double resid = row.y - yhat;
            for (Eigen::Index k = 0; k < k_count; ++k) {
                const double dk = a[static_cast<std::size_t>(k)] * (row.preds[static_cast<std::size_t>(k)] - yhat);
                grad.row(k) += (-2.0 * row.weight * resid * dk / mass) * xs.transpose();
            }
        }
        if (!grad.allFinite()) throw Error(ErrorCode::NonFinite, "conditional gradient is not finite; rescale covariates");
        EnsembleWeights trial = w;
        trial.beta -= step * grad;
        const double next = check(conditional_objective(design, trial));
        if (next <= current) {
            w = std::move(trial);
            current = next;
        } else {
            step *= 0.5;
        }
    }
    // Weights at the design's mean covariates, for reporting.
    w.alpha = softmax(w.beta.col(0));
    return w;
}

double combine(const EnsembleWeights& weights, std::span<const double> preds, std::span<const double> x) {
    if (preds.size() != weights.learners.size()) {
        throw Error(ErrorCode::DimensionMismatch, std::to_string(preds.size()) + " predictions for " +
                                                      std::to_string(weights.learners.size()) + " weights");
    }
    if (weights.mode == WeightMode::Conditional && x.size() != weights.x_center.size()) {
        throw Error(ErrorCode::DimensionMismatch, "conditional weights need the baseline covariates");
    }
    const auto alpha = weights.alpha_at(x);
    double out = 0.0;
    for (std::size_t k = 0; k < preds.size(); ++k) out += alpha[k] * preds[k];
    return out;
}

void write_weights_csv(std::ostream& out, const EnsembleWeights& weights, Time t, std::span<const double> x, bool header) {
    if (header) out << "t,learner,weight\n";
    out.precision(17);
    const auto alpha = weights.mode == WeightMode::Conditional ? weights.alpha_at(x) : weights.alpha;
    for (std::size_t k = 0; k < weights.learners.size(); ++k) {
        out << t << ',' << weights.learners[k] << ',' << alpha[k] << '\n';
    }
}

}  // namespace posl
