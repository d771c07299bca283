#include "wsk/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "wsk/json_io.hpp"

namespace wsk::report {

namespace {

bool is_retrieval(const eval::EvalReport& r) { return r.protocol == "retrieval"; }

void write_text(const std::string& text, const std::filesystem::path& path) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::io, "cannot write " + path.string());
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string to_json_text(const eval::EvalReport& r) {
  Json j;
  j["schema_version"] = 1;
  j["protocol"] = r.protocol;
  j["mode"] = r.mode;
  j["seeds"] = r.seeds;
  Json rows = Json::array();
  for (const eval::MetricRow& row : r.rows)
    rows.push_back(Json{{"name", row.name},
                        {"k1", row.k1},
                        {"k5", row.k5},
                        {"k10", row.k10},
                        {"per_seed_k1", row.per_seed_k1}});
  j["metrics"] = rows;
  Json queries = Json::array();
  for (const eval::QueryDetail& q : r.queries)
    queries.push_back(Json{{"seed", q.seed},
                           {"index", q.index},
                           {"true_label", q.true_label},
                           {"hit_rank", q.hit_rank}});
  j["queries"] = queries;
  Json pairs = Json::array();
  for (const eval::TransferPair& p : r.pairs)
    pairs.push_back(Json{{"source_task", p.source_task},
                         {"target_task", p.target_task},
                         {"source_row", p.source_row},
                         {"target_row", p.target_row},
                         {"similarity", p.similarity},
                         {"ari", p.ari_value},
                         {"flagged", p.flagged}});
  j["pairs"] = pairs;
  j["spearman"] = r.spearman_rho;
  j["flagged_pairs"] = r.flagged_pairs;
  return j.dump(2) + "\n";
}

std::string to_csv_text(const eval::EvalReport& r) {
  std::ostringstream os;
  if (r.protocol == "transferability") {
    os << "source_task,target_task,similarity,ari,flagged\n";
    for (const eval::TransferPair& p : r.pairs)
      os << p.source_task << "," << p.target_task << "," << fmt(p.similarity) << ","
         << fmt(p.ari_value) << "," << (p.flagged ? 1 : 0) << "\n";
    os << "# spearman," << fmt(r.spearman_rho) << "\n";
    return os.str();
  }
  const char* metric = is_retrieval(r) ? "rank" : "top";
  os << "method," << metric << "1," << metric << "5," << metric << "10\n";
  for (const eval::MetricRow& row : r.rows)
    os << row.name << "," << fmt(row.k1) << "," << fmt(row.k5) << "," << fmt(row.k10) << "\n";
  return os.str();
}

void write_json(const eval::EvalReport& report, const std::filesystem::path& path) {
  write_text(to_json_text(report), path);
}

void write_csv(const eval::EvalReport& report, const std::filesystem::path& path) {
  write_text(to_csv_text(report), path);
}

namespace {

std::string svg_scatter(const eval::EvalReport& r) {
  const int W = 480, H = 360, M = 48;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const eval::TransferPair& p : r.pairs) {
    xmin = std::min(xmin, p.similarity);
    xmax = std::max(xmax, p.similarity);
    ymin = std::min(ymin, p.ari_value);
    ymax = std::max(ymax, p.ari_value);
  }
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  auto px = [&](double x) { return M + (x - xmin) / (xmax - xmin) * (W - 2 * M); };
  auto py = [&](double y) { return H - M - (y - ymin) / (ymax - ymin) * (H - 2 * M); };
  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
  os << "<rect width='100%' height='100%' fill='white'/>\n";
  os << "<line x1='" << M << "' y1='" << H - M << "' x2='" << W - M << "' y2='" << H - M
     << "' stroke='black'/>\n";
  os << "<line x1='" << M << "' y1='" << M << "' x2='" << M << "' y2='" << H - M
     << "' stroke='black'/>\n";
  os << "<text x='" << W / 2 << "' y='" << H - 12
     << "' text-anchor='middle' font-size='12'>parameter similarity</text>\n";
  os << "<text x='14' y='" << H / 2 << "' text-anchor='middle' font-size='12' transform='rotate(-90 14 "
     << H / 2 << ")'>ARI</text>\n";
  for (const eval::TransferPair& p : r.pairs)
    os << "<circle cx='" << px(p.similarity) << "' cy='" << py(p.ari_value)
       << "' r='3' fill='" << (p.flagged ? "gray" : "steelblue") << "'/>\n";
  os << "<text x='" << W - M << "' y='" << M - 8 << "' text-anchor='end' font-size='12'>rho="
     << fmt(r.spearman_rho).substr(0, 6) << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

std::string svg_bars(const eval::EvalReport& r) {
  const int W = 480, H = 360, M = 48;
  const std::size_t n = r.rows.size();
  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
  os << "<rect width='100%' height='100%' fill='white'/>\n";
  os << "<line x1='" << M << "' y1='" << H - M << "' x2='" << W - M << "' y2='" << H - M
     << "' stroke='black'/>\n";
  const double band = static_cast<double>(W - 2 * M) / std::max<std::size_t>(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double h = std::clamp(r.rows[i].k1, 0.0, 1.0) * (H - 2 * M);
    const double x = M + band * static_cast<double>(i) + band * 0.15;
    os << "<rect x='" << x << "' y='" << H - M - h << "' width='" << band * 0.7
       << "' height='" << h << "' fill='steelblue'/>\n";
    os << "<text x='" << x + band * 0.35 << "' y='" << H - M + 14
       << "' text-anchor='middle' font-size='9'>" << r.rows[i].name << "</text>\n";
    os << "<text x='" << x + band * 0.35 << "' y='" << H - M - h - 4
       << "' text-anchor='middle' font-size='9'>" << fmt(r.rows[i].k1).substr(0, 6)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace

void write_svg(const eval::EvalReport& report, const std::filesystem::path& path) {
  write_text(report.protocol == "transferability" ? svg_scatter(report) : svg_bars(report),
             path);
}

}  // namespace wsk::report
