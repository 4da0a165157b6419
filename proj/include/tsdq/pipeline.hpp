#pragma once

#include <string>
#include <vector>

#include "tsdq/config.hpp"

namespace tsdq {

// Exit code contract shared by the CLI: 0 success, 1 usage/config error,
// 2 verification failure, 3 numerical failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitVerifyFailed = 2;
inline constexpr int kExitNumerical = 3;

/// Generates phantoms, full sinograms and masked noisy measurements under
/// out_dir, with a manifest CSV and the resolved config.
int cmd_simulate(const RunConfig& cfg, const std::string& out_dir);

/// Reconstructs every manifest entry of in_dir with the given method
/// ("fbp", "tv" or "deq"), writing images, PGM previews and a metrics CSV.
int cmd_reconstruct(const RunConfig& cfg, const std::string& method, const std::string& in_dir,
                    const std::string& out_dir, const std::string& checkpoint_path = "");

/// Trains the equilibrium model per the config; writes checkpoint and
/// history CSV. resume_path continues epoch numbering from a checkpoint.
int cmd_train(const RunConfig& cfg, const std::string& out_dir,
              const std::string& resume_path = "");

/// Runs the proposition/theorem/gradient verification suite; exit 2 on any
/// failed claim.
int cmd_verify(const RunConfig& cfg, const std::string& out_dir);

/// Aggregates per-image metrics CSVs from reconstruction directories into
/// a summary grouped by (method, s).
int cmd_evaluate(const std::vector<std::string>& recon_dirs, const std::string& out_csv);

}  // namespace tsdq
