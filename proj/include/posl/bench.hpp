#pragma once

#include "posl/engine.hpp"
#include "posl/simgen.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace posl {

/// Engine settings for the simulation study: the default library with losses older than
/// 80 subject-time units dropped from the risk.
EngineConfig study_engine_config();

struct BenchConfig {
    int which = 1;
    int n_historical = 10;
    int tau = 300;
    int replicates = 10;
    std::uint64_t seed = 7;
    EngineConfig engine = study_engine_config();
    SimulationParams sim{};
    /// Subject groups for the offline V-fold baseline (capped at the number of subjects).
    int vfolds = 5;
    /// Replicates in flight at once; 0 uses the hardware concurrency.
    int threads = 0;
};

inline constexpr const char* kMethodPosl = "posl";
inline constexpr const char* kMethodPooled = "pooled_online_sl";
inline constexpr const char* kMethodVFold = "offline_vfold_sl";

struct MseRow {
    Time t = 0;
    std::string method;
    double mse = 0.0;
    int replicate = 0;
};

struct WeightSummaryRow {
    Time t = 0;
    int replicate = 0;
    double historical_mass = 0.0;
    double individual_mass = 0.0;
};

struct ReplicateResult {
    int replicate = 0;
    std::vector<MseRow> mse;
    std::vector<WeightSummaryRow> weights;
    /// Hash of the simulated panel, identical across methods by construction.
    std::uint64_t data_fingerprint = 0;
};

/// Seed of replicate r.
std::uint64_t replicate_seed(std::uint64_t seed, int replicate);

/// Runs POSL, the pooled-only online super learner and the one-shot V-fold super learner on
/// one simulated replicate. MSE is over the forecast_horizon steps following each update time
/// whose window lies inside the series.
ReplicateResult run_replicate(const BenchConfig& config, int replicate);
std::vector<ReplicateResult> run_bench(const BenchConfig& config);

/// Historical-only copy of a POSL config, refreshed at every update time up to `tau`.
EngineConfig pooled_config(const EngineConfig& posl, Time tau);

void write_mse_csv(std::ostream& out, const std::vector<ReplicateResult>& results);
void write_weight_summary_csv(std::ostream& out, const std::vector<ReplicateResult>& results);

}  // namespace posl
