#pragma once

#include "posl/core.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace posl {

/// Mixes a base seed with stream identifiers so each (subject, purpose) gets its own stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t purpose = 0);
std::mt19937_64 make_rng(std::uint64_t seed);

/// ARMA(p, q) around an offset. AR polynomial must be stationary.
struct ArimaSpec {
    std::vector<double> ar_coeffs;
    std::vector<double> ma_coeffs;
    double innovation_sd = 1.0;
    int burn_in = 200;
};

void validate(const ArimaSpec& spec);
/// True when every root of 1 - a_1 z - ... - a_p z^p lies outside the unit circle.
bool is_stationary(std::span<const double> ar_coeffs);

struct MarComponent {
    double mixing_prob = 1.0;
    ArimaSpec spec;  ///< pure AR
};

/// Gaussian mixture autoregression around a shared level.
struct MarSpec {
    std::vector<MarComponent> components;
    double level = 0.0;
};

void validate(const MarSpec& spec);

/// True conditional means psi0(id, t) = E[Y(t) | past].
class TruthTrace {
public:
    void set(SubjectId id, Time first_time, std::vector<double> values);
    std::optional<double> at(SubjectId id, Time t) const;
    bool contains(SubjectId id) const { return traces_.contains(id); }
    const std::map<SubjectId, std::pair<Time, std::vector<double>>>& traces() const noexcept { return traces_; }

private:
    std::map<SubjectId, std::pair<Time, std::vector<double>>> traces_;
};

struct SimSeries {
    std::vector<double> y;
    std::vector<double> psi0;
    /// Mixture component drawn at each step (MAR only).
    std::vector<int> components;
};

/// X = (W1, W2, W3) with W1 ~ Bernoulli(0.5), W2 ~ U(19, 90), W3 ~ U(0, 2).
std::vector<double> gen_baseline(std::uint64_t seed);
/// f(X) = 0.5 W1 + 0.02 W2 + 0.5 W3.
double offset(std::span<const double> x);

SimSeries gen_arima(const ArimaSpec& spec, int length, std::uint64_t seed, double offset = 0.0);
/// Regime A for t <= switch_time, regime B afterwards; the recursion state carries over.
SimSeries gen_interrupted(const ArimaSpec& spec_a, const ArimaSpec& spec_b, int switch_time, int length,
                          std::uint64_t seed, double offset = 0.0);
SimSeries gen_mar(const MarSpec& spec, int length, std::uint64_t seed);

/// Default generator settings for the simulation designs.
ArimaSpec default_ar5();
ArimaSpec default_ma5();
MarSpec default_mar_historical();
MarSpec default_mar_target();

struct Simulation {
    int which = 1;
    Panel historical;
    PanelRecord target;
    TruthTrace truth;
};

/// Generator settings shared by the four designs.
struct SimulationParams {
    ArimaSpec historical = default_ar5();
    ArimaSpec target = default_ma5();
    MarSpec mar_historical = default_mar_historical();
    MarSpec mar_target = default_mar_target();
};

/// Simulation designs 1..4: historical subjects get ids 1..n, the target gets n + 1.
/// Observations occupy times 1..tau.
Simulation build_simulation(int which, int n_historical, int tau, std::uint64_t seed,
                            const SimulationParams& params = {});

}  // namespace posl
