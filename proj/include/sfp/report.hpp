#pragma once

#include <string>
#include <vector>

#include "sfp/adversary.hpp"
#include "sfp/fingerprint.hpp"
#include "sfp/io.hpp"

namespace sfp {

// JSON/CSV documents the CLI prints or writes.  No timestamps by default so
// identical runs produce identical bytes; stamp() adds one on request.

Json compare_report(const Fingerprint& a, const Fingerprint& b);

// verdict: "related" iff score > tau.
Json verify_report(const std::string& target_id, const std::string& suspect_id,
                   double fingerprint_dist, double score, double tau);

Json ablation_report(const std::vector<AblationResult>& rows);
std::string ablation_csv(const std::vector<AblationResult>& rows);

std::string trajectory_csv(const std::vector<FinetuneStep>& steps);
std::string ga_history_csv(const std::vector<double>& history);

// Adds "generated_at" (UTC, seconds) when asked; otherwise returns the
// document unchanged.
Json stamp(Json doc, bool with_timestamp);

}  // namespace sfp
