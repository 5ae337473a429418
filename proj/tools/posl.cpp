// posl: simulate panels, stream them through the engine, and benchmark against baselines.

#include "posl/bench.hpp"
#include "posl/config.hpp"
#include "posl/engine.hpp"
#include "posl/error.hpp"
#include "posl/io.hpp"
#include "posl/simgen.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit { kOk = 0, kUsage = 2, kData = 3, kRuntime = 4 };

struct Manifest {
    json doc;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    explicit Manifest(const std::string& command) {
        doc["command"] = command;
        doc["version"] = kVersion;
        const std::time_t now = std::time(nullptr);
        char buf[32];
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        doc["started_utc"] = buf;
        doc["outputs"] = json::array();
    }

    void output(const fs::path& p) { doc["outputs"].push_back(p.filename().string()); }

    void write(const fs::path& dir) {
        doc["wall_clock_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        auto out = posl::open_output(dir / "manifest.json");
        out << doc.dump(2) << '\n';
    }
};

json config_json(const posl::EngineConfig& c) { return json::parse(posl::dump_engine_config(c)); }

// Streaming defaults: 60-point warmup, batches of 5, losses weighted 1 within 30 and dropped past 180.
posl::EngineConfig run_defaults() {
    posl::EngineConfig c;
    c.decay = posl::DecaySpec{};
    return c;
}

posl::EngineConfig resolve_config(const posl::EngineConfig& base, const std::string& path, const std::string& mode,
                                  int warmup) {
    posl::EngineConfig c = path.empty() ? base : posl::load_engine_config(path);
    if (!mode.empty()) {
        try {
            c.mode = posl::parse_weight_mode(mode);
        } catch (const posl::Error&) {
            throw CLI::ValidationError("--mode", "expected discrete, convex or conditional");
        }
    }
    if (warmup >= 0) c.warmup = warmup;
    try {
        posl::validate(c);
    } catch (const posl::Error& e) {
        throw posl::Error(posl::ErrorCode::DataValidation, e.what());
    }
    return c;
}

void write_simulation(const posl::Simulation& sim, const fs::path& dir, Manifest& m) {
    fs::create_directories(dir);
    std::vector<posl::PanelRecord> all = sim.historical.records();
    all.push_back(sim.target);
    const posl::Panel panel(all, sim.historical.horizon());
    {
        const auto p = dir / "panel.csv";
        auto out = posl::open_output(p);
        posl::write_panel_csv(out, panel);
        m.output(p);
    }
    {
        const auto p = dir / "truth.csv";
        auto out = posl::open_output(p);
        posl::write_truth_csv(out, sim.truth);
        m.output(p);
    }
    m.doc["target_id"] = sim.target.subject_id;
}

int cmd_simulate(int which, int tau, int n_hist, std::uint64_t seed, int replicates, const fs::path& out_dir) {
    for (int r = 0; r < replicates; ++r) {
        const fs::path dir = replicates == 1 ? out_dir : out_dir / ("replicate_" + std::to_string(r));
        Manifest m("simulate");
        const auto rs = posl::replicate_seed(seed, r);
        m.doc["args"] = {{"which", which}, {"tau", tau}, {"n_hist", n_hist}, {"seed", seed}, {"replicate", r}};
        m.doc["seeds"] = {{"base", seed}, {"replicate", rs}};
        m.doc["generator"] = {{"ar", posl::default_ar5().ar_coeffs},
                              {"ma", posl::default_ma5().ma_coeffs},
                              {"innovation_sd", 1.0},
                              {"burn_in", posl::default_ar5().burn_in}};
        write_simulation(posl::build_simulation(which, n_hist, tau, rs), dir, m);
        m.write(dir);
    }
    return kOk;
}

int cmd_run(const fs::path& panel_path, const std::string& truth_path, const std::string& config_path,
            std::vector<posl::SubjectId> target_ids, const std::string& mode, int warmup, const fs::path& out_dir) {
    const posl::Panel panel = posl::read_panel_file(panel_path);
    if (panel.empty()) throw posl::Error(posl::ErrorCode::DataValidation, "panel has no subjects");
    const auto config = resolve_config(run_defaults(), config_path, mode, warmup);
    if (target_ids.empty()) target_ids.push_back(panel.ids().back());

    std::vector<posl::PanelRecord> historical;
    std::vector<posl::PanelRecord> shells;
    std::vector<const posl::PanelRecord*> streams;
    for (const auto& r : panel.records()) {
        if (std::find(target_ids.begin(), target_ids.end(), r.subject_id) == target_ids.end()) {
            historical.push_back(r);
            continue;
        }
        posl::PanelRecord shell;
        shell.subject_id = r.subject_id;
        shell.baseline = r.baseline;
        shell.entry_time = r.entry_time;
        shell.exit_time = r.exit_time;
        shells.push_back(shell);
        streams.push_back(&r);
    }
    for (auto id : target_ids) {
        if (!panel.find(id)) throw posl::Error(posl::ErrorCode::DataValidation, "target id " + std::to_string(id) + " not in panel");
    }
    std::optional<posl::TruthTrace> truth;
    if (!truth_path.empty()) truth = posl::read_truth_file(truth_path);

    posl::Engine engine(posl::Panel(historical), shells, config);
    fs::create_directories(out_dir);
    Manifest m("run");
    m.doc["args"] = {{"panel", panel_path.string()}, {"truth", truth_path}, {"config", config_path}, {"targets", target_ids}};
    m.doc["config"] = config_json(config);
    m.doc["evaluation_points_enter_training"] = true;

    auto forecasts = posl::open_output(out_dir / "forecasts.csv");
    auto weights = posl::open_output(out_dir / "weights.csv");
    auto risks = posl::open_output(out_dir / "risks.csv");
    m.output(out_dir / "forecasts.csv");
    m.output(out_dir / "weights.csv");
    m.output(out_dir / "risks.csv");

    posl::Time last = 0;
    for (const auto* r : streams) last = std::max(last, r->empty() ? r->entry_time : r->last_time());
    const std::vector<double> x0 = shells.empty() ? std::vector<double>{} : shells.front().baseline;
    bool header = true;
    for (posl::Time t = config.batch_size; t < last + config.batch_size; t += config.batch_size) {
        const posl::Time until = std::min(t, last);
        std::vector<posl::Observation> batch;
        for (const auto* r : streams) {
            for (std::size_t k = 0; k < r->size(); ++k) {
                if (r->times[k] > engine.clock() && r->times[k] <= until) {
                    batch.push_back({r->subject_id, r->times[k], r->covariates[k], r->outcomes[k]});
                }
            }
        }
        const auto out = engine.step(batch, until);
        for (const auto& d : out.diagnostics) std::cerr << "t=" << out.t << ": " << d << '\n';
        posl::write_forecasts_csv(forecasts, out.forecasts, &panel, header);
        posl::write_weights_csv(weights, out.weights, out.t, x0, header);
        posl::write_risks_csv(risks, engine.risk_table(), out.t, header);
        header = false;
    }
    if (truth) {
        auto oracle = posl::open_output(out_dir / "oracle.csv");
        posl::write_oracle_csv(oracle, posl::oracle_eval(engine, *truth));
        m.output(out_dir / "oracle.csv");
    }
    m.write(out_dir);
    return kOk;
}

int cmd_bench(posl::BenchConfig bc, const std::string& config_path, const std::string& mode, int warmup,
              const fs::path& out_dir) {
    bc.engine = resolve_config(posl::study_engine_config(), config_path, mode, warmup);
    const auto results = posl::run_bench(bc);
    fs::create_directories(out_dir);
    Manifest m("bench");
    m.doc["args"] = {{"which", bc.which},       {"tau", bc.tau},       {"n_hist", bc.n_historical},
                     {"replicates", bc.replicates}, {"seed", bc.seed}, {"vfolds", bc.vfolds}};
    m.doc["config"] = config_json(bc.engine);
    json seeds = json::array();
    for (const auto& r : results) {
        seeds.push_back({{"replicate", r.replicate},
                         {"seed", posl::replicate_seed(bc.seed, r.replicate)},
                         {"data_fingerprint", r.data_fingerprint}});
    }
    m.doc["seeds"] = seeds;
    {
        auto out = posl::open_output(out_dir / "mse.csv");
        posl::write_mse_csv(out, results);
        m.output(out_dir / "mse.csv");
    }
    {
        auto out = posl::open_output(out_dir / "weights_summary.csv");
        posl::write_weight_summary_csv(out, results);
        m.output(out_dir / "weights_summary.csv");
    }
    m.write(out_dir);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Personalized online super learner for panel time series"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    int which = 0;
    int tau = 540;
    int n_hist = 30;
    std::uint64_t seed = 7;
    int replicates = 1;
    std::string out_dir = ".";
    std::string config_path;
    std::string mode;
    int warmup = -1;

    auto* sim = app.add_subcommand("simulate", "Write a simulated panel, its truth trace and a manifest");
    sim->add_option("--which", which, "Simulation design")->required()->check(CLI::Range(1, 4));
    sim->add_option("--tau", tau, "Series length")->check(CLI::PositiveNumber);
    sim->add_option("--n-hist", n_hist, "Historical series")->check(CLI::PositiveNumber);
    sim->add_option("--seed", seed, "Base seed");
    sim->add_option("--replicates", replicates, "Seeded replicates")->check(CLI::PositiveNumber);
    sim->add_option("--out-dir", out_dir, "Output directory");

    std::string panel_path;
    std::string truth_path;
    std::vector<posl::SubjectId> targets;
    auto* run = app.add_subcommand("run", "Stream target series through the engine");
    run->add_option("--panel", panel_path, "Panel CSV")->required();
    run->add_option("--truth", truth_path, "Truth CSV (id,t,psi0); enables oracle.csv");
    run->add_option("--config", config_path, "JSON run config");
    run->add_option("--targets", targets, "Target ids (default: largest id)");
    run->add_option("--mode", mode, "discrete, convex or conditional");
    run->add_option("--warmup", warmup, "Override the individual warmup");
    run->add_option("--out-dir", out_dir, "Output directory");

    posl::BenchConfig bc;
    auto* bench = app.add_subcommand("bench", "Compare POSL with pooled and offline super learners");
    bench->add_option("--which", bc.which, "Simulation design")->required()->check(CLI::Range(1, 4));
    bench->add_option("--tau", bc.tau, "Series length")->check(CLI::PositiveNumber);
    bench->add_option("--n-hist", bc.n_historical, "Historical series")->check(CLI::PositiveNumber);
    bench->add_option("--replicates", bc.replicates, "Replicates")->check(CLI::PositiveNumber);
    bench->add_option("--seed", bc.seed, "Base seed");
    bench->add_option("--vfolds", bc.vfolds, "Subject groups for the offline baseline")->check(CLI::Range(2, 1000));
    bench->add_option("--threads", bc.threads, "Concurrent replicates (0: hardware)")->check(CLI::NonNegativeNumber);
    bench->add_option("--config", config_path, "JSON run config");
    bench->add_option("--mode", mode, "discrete, convex or conditional");
    bench->add_option("--warmup", warmup, "Override the individual warmup");
    bench->add_option("--out-dir", out_dir, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*sim) return cmd_simulate(which, tau, n_hist, seed, replicates, out_dir);
        if (*run) return cmd_run(panel_path, truth_path, config_path, targets, mode, warmup, out_dir);
        return cmd_bench(bc, config_path, mode, warmup, out_dir);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const posl::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        const bool data = e.code() == posl::ErrorCode::DataValidation || e.code() == posl::ErrorCode::Io;
        return data ? kData : kRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
}
