#include "posl/io.hpp"

#include "posl/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string_view>

namespace posl {

namespace {

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        auto field = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\r')) field.remove_suffix(1);
        while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
        out.push_back(field);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

[[noreturn]] void bad(std::size_t line_no, const std::string& msg) {
    throw Error(ErrorCode::DataValidation, "line " + std::to_string(line_no) + ": " + msg);
}

double parse_real(std::string_view s, std::size_t line_no) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
        bad(line_no, "not a finite number: '" + std::string(s) + "'");
    }
    return v;
}

Time parse_int(std::string_view s, std::size_t line_no) {
    Time v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) bad(line_no, "not an integer: '" + std::string(s) + "'");
    return v;
}

bool is_indexed(std::string_view name, char prefix) {
    if (name.size() < 2 || name.front() != prefix) return false;
    return std::all_of(name.begin() + 1, name.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    return in;
}

}  // namespace

std::string format_double(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) throw Error(ErrorCode::NonFinite, "cannot format value");
    return std::string(buf, ptr);
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    return out;
}

Panel read_panel_csv(std::istream& in, std::optional<Time> horizon_tau) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::DataValidation, "empty panel file");
    const auto header = split(line);
    if (header.size() < 3 || header[0] != "id" || header[1] != "t" || header.back() != "y") {
        throw Error(ErrorCode::DataValidation, "header must start with 'id,t' and end with 'y'");
    }
    std::optional<std::size_t> entry_col;
    std::optional<std::size_t> exit_col;
    std::vector<std::size_t> x_cols;
    std::vector<std::size_t> w_cols;
    for (std::size_t c = 2; c + 1 < header.size(); ++c) {
        const auto name = header[c];
        if (name == "entry" && !entry_col && x_cols.empty() && w_cols.empty()) {
            entry_col = c;
        } else if (name == "exit" && !exit_col && x_cols.empty() && w_cols.empty()) {
            exit_col = c;
        } else if (is_indexed(name, 'x') && w_cols.empty()) {
            if (name != "x" + std::to_string(x_cols.size() + 1)) bad(1, "baseline columns must be x1..xp in order");
            x_cols.push_back(c);
        } else if (is_indexed(name, 'w')) {
            if (name != "w" + std::to_string(w_cols.size() + 1)) bad(1, "covariate columns must be w1..wq in order");
            w_cols.push_back(c);
        } else {
            bad(1, "unexpected column '" + std::string(name) + "'");
        }
    }

    struct Row {
        Time t;
        Time entry;
        std::optional<Time> exit;
        std::vector<double> x;
        std::vector<double> w;
        double y;
        std::size_t line_no;
    };
    std::map<SubjectId, std::vector<Row>> by_id;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto f = split(line);
        if (f.size() != header.size()) {
            bad(line_no, "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
        }
        Row r{parse_int(f[1], line_no), 0, std::nullopt, {}, {}, parse_real(f.back(), line_no), line_no};
        if (entry_col && !f[*entry_col].empty()) r.entry = parse_int(f[*entry_col], line_no);
        if (exit_col && !f[*exit_col].empty()) r.exit = parse_int(f[*exit_col], line_no);
        for (auto c : x_cols) r.x.push_back(parse_real(f[c], line_no));
        for (auto c : w_cols) r.w.push_back(parse_real(f[c], line_no));
        by_id[parse_int(f[0], line_no)].push_back(std::move(r));
    }

    std::vector<PanelRecord> records;
    for (auto& [id, rows] : by_id) {
        std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.t < b.t; });
        PanelRecord rec;
        rec.subject_id = id;
        rec.baseline = rows.front().x;
        rec.entry_time = rows.front().entry;
        rec.exit_time = rows.front().exit;
        for (const auto& r : rows) {
            if (r.x != rec.baseline) bad(r.line_no, "baseline changes within id " + std::to_string(id));
            if (r.entry != rec.entry_time || r.exit != rec.exit_time) {
                bad(r.line_no, "entry/exit changes within id " + std::to_string(id));
            }
            rec.times.push_back(r.t);
            rec.covariates.push_back(r.w);
            rec.outcomes.push_back(r.y);
        }
        validate(rec);
        records.push_back(std::move(rec));
    }
    return Panel(std::move(records), horizon_tau);
}

Panel read_panel_file(const std::filesystem::path& path, std::optional<Time> horizon_tau) {
    auto in = open_input(path);
    return read_panel_csv(in, horizon_tau);
}

void write_panel_csv(std::ostream& out, const Panel& panel) {
    std::size_t p = 0;
    std::size_t q = 0;
    for (const auto& r : panel.records()) {
        p = std::max(p, r.baseline.size());
        q = std::max(q, r.covariate_dim());
    }
    out << "id,t,entry,exit";
    for (std::size_t j = 1; j <= p; ++j) out << ",x" << j;
    for (std::size_t j = 1; j <= q; ++j) out << ",w" << j;
    out << ",y\n";
    // Panel keeps records in id order.
    for (const auto& r : panel.records()) {
        if (r.baseline.size() != p || (!r.empty() && r.covariate_dim() != q)) {
            throw Error(ErrorCode::DimensionMismatch, "records differ in column count");
        }
        for (std::size_t k = 0; k < r.size(); ++k) {
            out << r.subject_id << ',' << r.times[k] << ',' << r.entry_time << ',' << r.exit();
            for (double x : r.baseline) out << ',' << format_double(x);
            for (double w : r.covariates[k]) out << ',' << format_double(w);
            out << ',' << format_double(r.outcomes[k]) << '\n';
        }
    }
}

TruthTrace read_truth_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || split(line) != std::vector<std::string_view>{"id", "t", "psi0"}) {
        throw Error(ErrorCode::DataValidation, "truth header must be 'id,t,psi0'");
    }
    std::map<SubjectId, std::map<Time, double>> values;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto f = split(line);
        if (f.size() != 3) bad(line_no, "expected 3 fields");
        values[parse_int(f[0], line_no)][parse_int(f[1], line_no)] = parse_real(f[2], line_no);
    }
    TruthTrace truth;
    for (const auto& [id, series] : values) {
        const Time first = series.begin()->first;
        std::vector<double> v;
        Time expected = first;
        for (const auto& [t, psi] : series) {
            if (t != expected) bad(0, "truth for id " + std::to_string(id) + " is not contiguous");
            v.push_back(psi);
            ++expected;
        }
        truth.set(id, first, std::move(v));
    }
    return truth;
}

TruthTrace read_truth_file(const std::filesystem::path& path) {
    auto in = open_input(path);
    return read_truth_csv(in);
}

void write_truth_csv(std::ostream& out, const TruthTrace& truth) {
    out << "id,t,psi0\n";
    for (const auto& [id, trace] : truth.traces()) {
        const auto& [first, values] = trace;
        for (std::size_t k = 0; k < values.size(); ++k) {
            out << id << ',' << first + static_cast<Time>(k) << ',' << format_double(values[k]) << '\n';
        }
    }
}

}  // namespace posl
