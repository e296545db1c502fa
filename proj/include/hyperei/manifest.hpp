#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "model.hpp"
#include "trainer.hpp"

namespace hei {

inline constexpr const char* kToolName = "hyperei";
inline constexpr const char* kToolVersion = "0.1.0";

// Everything an inpainting run needs, fully resolved. The manifest written
// from this is sufficient to reproduce the run's artifacts bit-exactly.
struct InpaintJob {
  std::filesystem::path cube_path;
  std::filesystem::path mask_path;
  std::filesystem::path out_path;
  std::optional<std::filesystem::path> history_path;
  std::optional<std::filesystem::path> checkpoint_path;
  std::optional<std::filesystem::path> reference_path;
  net::ModelConfig model;      // in_bands resolved from the cube header
  train::Config training;
};

// Serialized before training starts; includes input-file hashes and the
// resolved configuration.
std::string manifest_json(const InpaintJob& job);
void write_manifest(const InpaintJob& job, const std::filesystem::path& path);

// Rebuilds a job from a manifest; output paths may then be overridden.
InpaintJob job_from_manifest(const std::filesystem::path& path);

}  // namespace hei
