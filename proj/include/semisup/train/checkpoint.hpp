#pragma once

#include <string>

#include "semisup/train/trainer.hpp"

namespace semisup::train {

// Positions of the sampler streams, enough to resume the exact batch
// sequence (stream shuffles are keyed by pass index, so no generator state
// needs persisting).
struct SamplerCursors {
  std::uint64_t labeled_pass = 0, labeled_cursor = 0;
  std::uint64_t unlabeled_pass = 0, unlabeled_cursor = 0;
  std::uint64_t mixed_pass = 0, mixed_cursor = 0;
};

// Versioned binary dump of a TrainerState (see docs/formats.md). Together
// with the echoed config it resumes a run bit-identically.
template <typename T>
void save_checkpoint(const std::string& path, const TrainerState<T>& state,
                     std::uint64_t config_hash, const SamplerCursors& cursors);

// state.spec and algorithm must already match the config that produced the
// file; config_hash mismatches are rejected.
template <typename T>
void load_checkpoint(const std::string& path, TrainerState<T>& state,
                     std::uint64_t expected_config_hash, SamplerCursors& cursors);

}  // namespace semisup::train
