#pragma once

#include "mcpforge/config.hpp"
#include "mcpforge/search.hpp"
#include "mcpforge/verify.hpp"

namespace mcpforge {

// Full conversion of one repository: download, analysis, env, generate /
// code_check / run / review rounds, security scan, finish. Failures are
// recorded in the ConversionRecord, never thrown.
ConversionRecord convert_repository(const RepoCandidate& candidate, const RunConfig& config,
                                    Gateway& gateway, const std::string& run_id = "");

}  // namespace mcpforge
