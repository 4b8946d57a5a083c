#pragma once

// Run configuration: a JSON document with a fixed key schema. A document may
// name a preset ("toy" or "paper") and override any subset of its keys;
// unknown keys are errors.

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "avrl/curation.hpp"
#include "avrl/evaluation.hpp"
#include "avrl/gspo.hpp"
#include "avrl/judge.hpp"
#include "avrl/orchestrator.hpp"
#include "avrl/reward.hpp"
#include "avrl/world.hpp"

namespace avrl {

struct RunPaths {
  std::string corpus;
  std::string heldout;
  std::string manifest;
  std::string output_dir = "runs/default";
};

struct JudgeSettings {
  std::string endpoint;
  int timeout_ms = 30000;
  int max_attempts = 3;
  int backoff_ms = 200;
  int max_in_flight = 4;
  std::string transcript;  // cached replies, read before and written after a run
};

struct EvalSettings {
  std::size_t samples_per_task = 1;
  double temperature = 1.0;
  std::vector<ModalitySetting> settings{ModalitySetting::kAudioVisual};
};

// Large-model values kept for reference; nothing at desk scale reads them.
struct ModelDefaults {
  std::size_t global_batch_size = 256;
  std::size_t max_seq_len = 32768;
  double moe_aux_loss_coeff = 1e-3;
  std::size_t fps_max_frames = 64;
};

struct RunConfig {
  std::string preset = "toy";
  std::uint64_t seed = 7;
  RunPaths paths;
  WorldParams world;
  double corrupt_fraction = 0.1;
  TrainerConfig trainer;
  StageConfig stage;
  RewardCoefficients coefficients;
  CurationConfig curation;
  JudgeSettings judge;
  EvalSettings eval;
  ModelDefaults model;

  nlohmann::json to_json() const;
  // SHA-256 of the canonical JSON without output paths.
  std::string digest() const;
  // Throws ConfigError.
  void validate() const;

  RemoteJudgeConfig remote_judge_config() const;
  RewardSettings reward_settings() const;
};

RunConfig preset_config(const std::string& name);

// Applies a JSON document onto its preset (default "toy"). Throws ConfigError.
RunConfig config_from_json(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);

// Writes config.json and config.sha256 into the directory.
void write_resolved_config(const RunConfig& cfg, const std::string& dir);

}  // namespace avrl
