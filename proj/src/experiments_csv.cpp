#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "mixbo/error.hpp"
#include "mixbo/experiment.hpp"

namespace mixbo {

namespace {

constexpr const char* kHeader =
    "id,batch,virgin_pp,recycled,filler,impact_modifier,mfr_g_per_10min,youngs_mpa,"
    "impact_kj_per_m2,provenance";

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& s, int line, const char* column) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorKind::SchemaError,
                "line " + std::to_string(line) + ": column " + column + " is not a number: '" + s + "'");
  }
  return v;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::RandomInit: return "random_init";
    case Provenance::BoProposal: return "bo_proposal";
    case Provenance::ManualEntry: return "manual_entry";
    case Provenance::Historical: return "historical";
  }
  return "manual_entry";
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "random_init") return Provenance::RandomInit;
  if (s == "bo_proposal") return Provenance::BoProposal;
  if (s == "manual_entry" || s.empty()) return Provenance::ManualEntry;
  if (s == "historical") return Provenance::Historical;
  throw Error(ErrorKind::SchemaError, "unknown provenance: " + std::string(s));
}

nlohmann::json to_json(const QualityMetrics& m) {
  return {{"mfr", m.mfr}, {"youngs_modulus", m.youngs_modulus}, {"impact_strength", m.impact_strength}};
}

QualityMetrics metrics_from_json(const nlohmann::json& j) {
  return {j.at("mfr").get<double>(), j.at("youngs_modulus").get<double>(),
          j.at("impact_strength").get<double>()};
}

nlohmann::json to_json(const Experiment& e) {
  nlohmann::json j{{"id", e.id},
                   {"batch_index", e.batch_index},
                   {"recipe",
                    {{"virgin_pp", e.recipe.virgin_pp},
                     {"recycled", e.recipe.recycled},
                     {"filler", e.recipe.filler},
                     {"impact_modifier", e.recipe.impact_modifier}}},
                   {"provenance", to_string(e.provenance)}};
  if (e.measured) {
    j["measured"] = {{"mfr", e.measured->mfr},
                     {"youngs_modulus", e.measured->youngs_modulus},
                     {"impact_strength", e.measured->impact_strength}};
  } else {
    j["measured"] = nullptr;
  }
  return j;
}

Experiment experiment_from_json(const nlohmann::json& j) {
  Experiment e;
  e.id = j.at("id").get<std::string>();
  e.batch_index = j.at("batch_index").get<int>();
  const auto& r = j.at("recipe");
  e.recipe = {r.at("virgin_pp").get<double>(), r.at("recycled").get<double>(),
              r.at("filler").get<double>(), r.at("impact_modifier").get<double>()};
  e.provenance = provenance_from_string(j.value("provenance", std::string("manual_entry")));
  if (j.contains("measured") && !j.at("measured").is_null()) {
    const auto& m = j.at("measured");
    e.measured = QualityMetrics{m.at("mfr").get<double>(), m.at("youngs_modulus").get<double>(),
                                m.at("impact_strength").get<double>()};
  }
  return e;
}

void write_experiments_csv(std::ostream& out, const std::vector<Experiment>& experiments) {
  out << kHeader << '\n';
  for (const auto& e : experiments) {
    out << e.id << ',' << e.batch_index << ',' << fmt(e.recipe.virgin_pp) << ','
        << fmt(e.recipe.recycled) << ',' << fmt(e.recipe.filler) << ','
        << fmt(e.recipe.impact_modifier) << ',';
    if (e.measured) {
      out << fmt(e.measured->mfr) << ',' << fmt(e.measured->youngs_modulus) << ','
          << fmt(e.measured->impact_strength);
    } else {
      out << ",,";
    }
    out << ',' << to_string(e.provenance) << '\n';
  }
}

std::vector<Experiment> read_experiments_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::SchemaError, "empty experiments CSV");
  const auto header = split(line);
  const auto expected = split(kHeader);
  if (header != expected) {
    throw Error(ErrorKind::SchemaError, "unexpected CSV header; expected: " + std::string(kHeader));
  }
  std::vector<Experiment> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto c = split(line);
    if (c.size() != expected.size()) {
      throw Error(ErrorKind::SchemaError,
                  "line " + std::to_string(lineno) + ": expected " +
                      std::to_string(expected.size()) + " columns, got " + std::to_string(c.size()));
    }
    Experiment e;
    e.id = c[0];
    e.batch_index = static_cast<int>(parse_double(c[1], lineno, "batch"));
    e.recipe = {parse_double(c[2], lineno, "virgin_pp"), parse_double(c[3], lineno, "recycled"),
                parse_double(c[4], lineno, "filler"), parse_double(c[5], lineno, "impact_modifier")};
    const bool any = !c[6].empty() || !c[7].empty() || !c[8].empty();
    if (any) {
      e.measured = QualityMetrics{parse_double(c[6], lineno, "mfr_g_per_10min"),
                                  parse_double(c[7], lineno, "youngs_mpa"),
                                  parse_double(c[8], lineno, "impact_kj_per_m2")};
    }
    e.provenance = provenance_from_string(c[9]);
    rows.push_back(std::move(e));
  }
  return rows;
}

std::vector<Experiment> read_experiments_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::NotFound, "cannot open CSV file: " + path);
  return read_experiments_csv(in);
}

}  // namespace mixbo
