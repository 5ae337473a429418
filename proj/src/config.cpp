#include "posl/config.hpp"

#include "posl/error.hpp"

#include <json.hpp>

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace posl {

namespace {

using nlohmann::json;

[[noreturn]] void field_error(const std::string& field, const std::string& msg) {
    throw Error(ErrorCode::DataValidation, field + ": " + msg);
}

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
    if (!j.is_object()) field_error(where.empty() ? "config" : where, "expected an object");
    for (const auto& [key, value] : j.items()) {
        if (!allowed.contains(key)) field_error(where.empty() ? key : where + "." + key, "unknown key");
    }
}

std::string path_of(const std::string& where, const std::string& key) { return where.empty() ? key : where + "." + key; }

template <class T>
void read(const json& j, const std::string& where, const std::string& key, T& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw std::invalid_argument("expected a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw std::invalid_argument("expected an integer");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw std::invalid_argument("expected a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw std::invalid_argument("expected a string");
        }
        out = v.get<T>();
    } catch (const std::exception& e) {
        field_error(path_of(where, key), e.what());
    }
}

template <class E>
void read_enum(const json& j, const std::string& where, const std::string& key, E& out,
               const std::function<E(const std::string&)>& parse) {
    if (!j.contains(key)) return;
    std::string text;
    read(j, where, key, text);
    try {
        out = parse(text);
    } catch (const Error&) {
        field_error(path_of(where, key), "unknown value '" + text + "'");
    }
}

FoldSpec parse_fold_spec(const json& j, const std::string& where) {
    check_keys(j, where, {"scheme", "first_window", "validation_size", "batch", "gap", "sample_folds"});
    FoldSpec s;
    read_enum<FoldScheme>(j, where, "scheme", s.scheme, parse_fold_scheme);
    read(j, where, "first_window", s.first_window);
    read(j, where, "validation_size", s.validation_size);
    read(j, where, "batch", s.batch);
    read(j, where, "gap", s.gap);
    read(j, where, "sample_folds", s.sample_folds);
    return s;
}

LearnerSpec parse_learner(const json& j, const std::string& where) {
    check_keys(j, where, {"name", "family", "scope", "lags", "summary", "y_only", "ridge_lambda", "smoothing", "buffer_limit"});
    LearnerSpec s;
    if (!j.contains("name")) field_error(where + ".name", "required");
    if (!j.contains("family")) field_error(where + ".family", "required");
    read(j, where, "name", s.name);
    read_enum<LearnerFamily>(j, where, "family", s.family, parse_learner_family);
    read_enum<LearnerScope>(j, where, "scope", s.scope, parse_learner_scope);
    read(j, where, "lags", s.summary.memory);
    std::string kind = "lag_window";
    read(j, where, "summary", kind);
    if (kind == "lag_window") {
        s.summary.kind = SummaryKind::LagWindow;
    } else if (kind == "running_mean") {
        s.summary.kind = SummaryKind::RunningMean;
    } else {
        field_error(where + ".summary", "unknown value '" + kind + "'");
    }
    read(j, where, "y_only", s.summary.y_only);
    read(j, where, "ridge_lambda", s.ridge_lambda);
    read(j, where, "smoothing", s.smoothing);
    read(j, where, "buffer_limit", s.buffer_limit);
    return s;
}

json learner_json(const LearnerSpec& s) {
    return json{{"name", s.name},
                {"family", to_string(s.family)},
                {"scope", to_string(s.scope)},
                {"lags", s.summary.memory},
                {"summary", s.summary.kind == SummaryKind::LagWindow ? "lag_window" : "running_mean"},
                {"y_only", s.summary.y_only},
                {"ridge_lambda", s.ridge_lambda},
                {"smoothing", s.smoothing},
                {"buffer_limit", s.buffer_limit}};
}

}  // namespace

EngineConfig parse_engine_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::DataValidation, std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(j, "", {"historical_refresh_times", "batch_size", "warmup", "forecast_horizon", "fold_spec", "decay",
                       "mode", "per_m_selection", "conditional", "learners", "group_candidates"});
    EngineConfig c;
    read(j, "", "historical_refresh_times", c.historical_refresh_times);
    read(j, "", "batch_size", c.batch_size);
    read(j, "", "warmup", c.warmup);
    read(j, "", "forecast_horizon", c.forecast_horizon);
    read_enum<WeightMode>(j, "", "mode", c.mode, parse_weight_mode);
    read(j, "", "per_m_selection", c.per_m_selection);
    read(j, "", "group_candidates", c.group_candidates);
    if (j.contains("fold_spec")) c.fold_spec = parse_fold_spec(j.at("fold_spec"), "fold_spec");
    if (j.contains("decay") && !j.at("decay").is_null()) {
        const auto& d = j.at("decay");
        check_keys(d, "decay", {"full_weight_window", "zero_weight_cutoff", "rate"});
        DecaySpec s;
        read(d, "decay", "full_weight_window", s.full_weight_window);
        read(d, "decay", "zero_weight_cutoff", s.zero_weight_cutoff);
        read(d, "decay", "rate", s.rate);
        c.decay = s;
    }
    if (j.contains("conditional")) {
        const auto& d = j.at("conditional");
        check_keys(d, "conditional", {"iterations", "step"});
        read(d, "conditional", "iterations", c.conditional.iterations);
        read(d, "conditional", "step", c.conditional.step);
    }
    if (j.contains("learners")) {
        const auto& arr = j.at("learners");
        if (!arr.is_array()) field_error("learners", "expected an array");
        c.learners.clear();
        for (std::size_t k = 0; k < arr.size(); ++k) {
            c.learners.push_back(parse_learner(arr[k], "learners[" + std::to_string(k) + "]"));
        }
    }
    try {
        validate(c);
    } catch (const Error& e) {
        // Engine validation already names the field.
        std::string msg = e.what();
        const std::string prefix = "InvalidArgument: ";
        if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
        throw Error(ErrorCode::DataValidation, msg);
    }
    return c;
}

EngineConfig load_engine_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_engine_config(text.str());
}

std::string dump_engine_config(const EngineConfig& c) {
    json j;
    j["historical_refresh_times"] = c.historical_refresh_times;
    j["batch_size"] = c.batch_size;
    j["warmup"] = c.warmup;
    j["forecast_horizon"] = c.forecast_horizon;
    j["mode"] = to_string(c.mode);
    j["per_m_selection"] = c.per_m_selection;
    j["group_candidates"] = c.group_candidates;
    j["fold_spec"] = {{"scheme", to_string(c.fold_spec.scheme)},
                      {"first_window", c.fold_spec.first_window},
                      {"validation_size", c.fold_spec.validation_size},
                      {"batch", c.fold_spec.batch},
                      {"gap", c.fold_spec.gap},
                      {"sample_folds", c.fold_spec.sample_folds}};
    if (c.decay) {
        j["decay"] = {{"full_weight_window", c.decay->full_weight_window},
                      {"zero_weight_cutoff", c.decay->zero_weight_cutoff},
                      {"rate", c.decay->rate}};
    } else {
        j["decay"] = nullptr;
    }
    j["conditional"] = {{"iterations", c.conditional.iterations}, {"step", c.conditional.step}};
    j["learners"] = json::array();
    for (const auto& s : c.learners) j["learners"].push_back(learner_json(s));
    return j.dump(2);
}

}  // namespace posl
