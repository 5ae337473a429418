#pragma once

#include "posl/core.hpp"
#include "posl/simgen.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace posl {

/// Reads `id,t,[entry,][exit,]x1..xp,w1..wq,y`. Baseline columns must be constant within an id.
/// Throws DataValidation on malformed rows.
Panel read_panel_csv(std::istream& in, std::optional<Time> horizon_tau = std::nullopt);
Panel read_panel_file(const std::filesystem::path& path, std::optional<Time> horizon_tau = std::nullopt);

/// Writes the full schema, rows sorted by (id, t).
void write_panel_csv(std::ostream& out, const Panel& panel);

/// `id,t,psi0`
TruthTrace read_truth_csv(std::istream& in);
TruthTrace read_truth_file(const std::filesystem::path& path);
void write_truth_csv(std::ostream& out, const TruthTrace& truth);

/// Shortest round-trip text for a double.
std::string format_double(double v);

/// Opens for writing or throws Io.
std::ofstream open_output(const std::filesystem::path& path);

}  // namespace posl
