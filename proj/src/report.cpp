#include "sfp/report.hpp"

#include <cstdio>
#include <ctime>
#include <sstream>

namespace sfp {

namespace {

// Shortest round-trip formatting keeps the files diffable and exact.
std::string num(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

Json compare_report(const Fingerprint& a, const Fingerprint& b) {
  Json doc;
  doc["kind"] = "compare";
  doc["model_a"] = a.model_id;
  doc["model_b"] = b.model_id;
  doc["n_f"] = a.n_f;
  doc["h"] = a.top_k;
  doc["row_order"] = a.row_order;
  doc["distance"] = fingerprint_distance(a, b);
  return doc;
}

Json verify_report(const std::string& target_id, const std::string& suspect_id,
                   double fingerprint_dist, double score, double tau) {
  Json doc;
  doc["kind"] = "verify";
  doc["target"] = target_id;
  doc["suspect"] = suspect_id;
  doc["fingerprint_distance"] = fingerprint_dist;
  doc["score"] = score;
  doc["tau"] = tau;
  doc["verdict"] = score > tau ? "related" : "unrelated";
  return doc;
}

Json ablation_report(const std::vector<AblationResult>& rows) {
  Json doc;
  doc["kind"] = "ablation";
  doc["count"] = rows.size();
  Json out = Json::array();
  for (const AblationResult& r : rows) {
    Json row;
    row["window"] = to_string(r.cell.window);
    row["subset"] = to_string(r.cell.subset);
    row["values"] = to_string(r.cell.kind);
    row["n_f"] = r.cell.n_f;
    row["h"] = r.cell.h;
    row["feasible"] = r.feasible;
    if (r.feasible) {
      row["max_related"] = r.report.max_related;
      row["min_unrelated"] = r.report.min_unrelated;
      row["margin"] = r.report.margin;
    } else {
      row["note"] = r.note;
    }
    out.push_back(std::move(row));
  }
  doc["rows"] = std::move(out);
  return doc;
}

std::string ablation_csv(const std::vector<AblationResult>& rows) {
  std::string out =
      "window,subset,values,n_f,h,feasible,max_related,min_unrelated,margin\n";
  for (const AblationResult& r : rows) {
    out += to_string(r.cell.window);
    out += ',';
    out += to_string(r.cell.subset);
    out += ',';
    out += to_string(r.cell.kind);
    out += ',' + std::to_string(r.cell.n_f) + ',' + std::to_string(r.cell.h);
    if (r.feasible)
      out += ",1," + num(r.report.max_related) + ',' +
             num(r.report.min_unrelated) + ',' + num(r.report.margin);
    else
      out += ",0,,,";
    out += '\n';
  }
  return out;
}

std::string trajectory_csv(const std::vector<FinetuneStep>& steps) {
  std::string out = "step,distance,attack_loss,data_loss\n";
  for (const FinetuneStep& s : steps)
    out += std::to_string(s.step) + ',' + num(s.distance) + ',' +
           num(s.attack_loss) + ',' + num(s.data_loss) + '\n';
  return out;
}

std::string ga_history_csv(const std::vector<double>& history) {
  std::string out = "generation,best_fitness\n";
  for (std::size_t g = 0; g < history.size(); ++g)
    out += std::to_string(g) + ',' + num(history[g]) + '\n';
  return out;
}

Json stamp(Json doc, bool with_timestamp) {
  if (with_timestamp) {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    doc["generated_at"] = buf;
  }
  return doc;
}

}  // namespace sfp
