#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "jigsaw/cfn.hpp"
#include "jigsaw/imagepipe.hpp"
#include "jigsaw/trainer.hpp"

namespace jigsaw {

/// Experiment description read from flat `section.key = value` text.
///
///   seed = 7
///   deterministic = true
///   data.manifest = synth/manifest.txt
///   data.norm = synth/norm.txt          (optional)
///   data.permset = perms.txt
///   data.heldout = synth_val/manifest.txt  (optional, used by eval)
///   puzzle.resize_target / crop / grid / cell / tile
///   cfn.preset = toy | full             (or the full explicit cfn.* key set)
///   train.lr / batch_size / iterations / momentum / lr_steps / lr_decay / checkpoint_every / log_every
///   out.dir = runs/toy
///
/// Unknown keys are rejected. Relative data.* paths resolve against
/// $JIGSAW_DATA_ROOT when it is set.
struct RunConfig {
  std::uint64_t seed = 1;
  bool deterministic = true;
  std::filesystem::path manifest;
  std::filesystem::path norm;
  std::filesystem::path permset;
  std::filesystem::path heldout;
  std::filesystem::path out_dir = "run";
  PuzzleConfig puzzle = PuzzleConfig::toy();
  std::string cfn_preset = "toy";
  std::optional<CfnConfig> cfn;  // explicit layout, overrides the preset
  TrainConfig train;

  /// Network for a permutation set with `num_classes` entries.
  CfnConfig network(Index num_classes) const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace jigsaw
