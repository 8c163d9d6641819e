#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "sluadv/comparison.hpp"

namespace sluadv {

namespace {

std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", fraction * 100.0);
  return buf;
}

std::string cell(const nlohmann::json& stats) {
  std::string out = percent(stats.at("mean").get<double>());
  if (stats.at("per_seed").size() > 1) {
    out += " [" + percent(stats.at("min").get<double>()) + ", " + percent(stats.at("max").get<double>()) + "]";
  }
  return out;
}

}  // namespace

std::string render_markdown(const nlohmann::json& report) {
  try {
    const auto languages = report.at("languages").get<std::vector<std::string>>();
    std::vector<std::string> columns = languages;
    columns.emplace_back("Avg.");
    const char* const metrics[] = {"semer", "slot_f1", "ic_accuracy"};
    const char* const titles[] = {"SemER", "SF F1", "IC acc"};

    std::ostringstream out;
    out << "| Model |";
    for (const auto& c : columns) {
      for (const char* t : titles) out << ' ' << c << ' ' << t << " |";
    }
    out << " Avg. SemER rel. change |\n|---|";
    for (std::size_t i = 0; i < columns.size() * 3; ++i) out << "---:|";
    out << "---:|\n";
    for (const auto& row : report.at("rows")) {
      out << "| " << row.at("system").get<std::string>() << " |";
      for (const auto& c : columns) {
        const auto& cells = c == "Avg." ? row.at("avg") : row.at("per_language").at(c);
        for (const char* m : metrics) out << ' ' << cell(cells.at(m)) << " |";
      }
      if (row.contains("relative_change") && !row["relative_change"]["avg"]["semer"].is_null()) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%+.2f%%", row["relative_change"]["avg"]["semer"].get<double>());
        out << ' ' << buf << " |\n";
      } else {
        out << " - |\n";
      }
    }
    const auto seeds = report.at("seeds");
    out << "\nValues in percent; mean over " << seeds.size() << " seed(s)";
    if (seeds.size() > 1) out << ", [min, max] in brackets";
    out << ". Relative change is against Naive.\n";
    return out.str();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed comparison report: ") + e.what());
  }
}

}  // namespace sluadv
