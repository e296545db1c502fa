#include "hyperei/manifest.hpp"

#include <json.hpp>

#include <chrono>
#include <fstream>

#include "hyperei/io.hpp"

namespace hei {

namespace {

using nlohmann::json;

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json input_entry(const std::filesystem::path& path) {
  char hex[19];
  std::snprintf(hex, sizeof hex, "0x%016llx",
                static_cast<unsigned long long>(file_fnv1a(path)));
  return json{{"path", path.string()}, {"fnv1a64", hex}};
}

}  // namespace

std::string manifest_json(const InpaintJob& job) {
  json inputs{{"cube", input_entry(job.cube_path)}, {"mask", input_entry(job.mask_path)}};
  if (job.reference_path) inputs["reference"] = input_entry(*job.reference_path);

  json outputs{{"x_hat", job.out_path.string()}};
  if (job.history_path) outputs["history"] = job.history_path->string();
  if (job.checkpoint_path) outputs["checkpoint"] = job.checkpoint_path->string();

  const json m{
      {"tool", kToolName},
      {"version", kToolVersion},
      {"command", "inpaint"},
      {"created_utc", utc_now()},
      {"objective", job.training.alpha > 0.0 ? "mc+ei" : "mc_only"},
      {"inputs", inputs},
      {"model",
       {{"in_bands", job.model.in_bands},
        {"base_channels", job.model.base_channels},
        {"depth", job.model.depth},
        {"attention_rank", job.model.attention_rank},
        {"attention_mode", net::to_string(job.model.attention_mode)},
        {"seed", job.model.seed}}},
      {"train",
       {{"alpha", job.training.alpha},
        {"group_size", job.training.group.size},
        {"lr", job.training.lr},
        {"iterations", job.training.iterations},
        {"seed", job.training.seed},
        {"log_every", job.training.log_every},
        {"data_consistency_output", job.training.data_consistency_output}}},
      {"outputs", outputs},
  };
  return m.dump(2) + "\n";
}

void write_manifest(const InpaintJob& job, const std::filesystem::path& path) {
  const std::string text = manifest_json(job);
  const std::filesystem::path tmp = path.string() + ".tmp";
  std::ofstream f(tmp, std::ios::trunc);
  if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
  f << text;
  if (!f) throw IoError("write failed on " + tmp.string());
  f.close();
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string());
}

InpaintJob job_from_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open " + path.string() + " for reading");
  json m;
  try {
    f >> m;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": not a valid manifest: " + e.what());
  }
  try {
    InpaintJob job;
    job.cube_path = m.at("inputs").at("cube").at("path").get<std::string>();
    job.mask_path = m.at("inputs").at("mask").at("path").get<std::string>();
    if (m.at("inputs").contains("reference"))
      job.reference_path = m.at("inputs").at("reference").at("path").get<std::string>();
    job.out_path = m.at("outputs").at("x_hat").get<std::string>();
    if (m.at("outputs").contains("history"))
      job.history_path = m.at("outputs").at("history").get<std::string>();
    if (m.at("outputs").contains("checkpoint"))
      job.checkpoint_path = m.at("outputs").at("checkpoint").get<std::string>();
    const auto& mm = m.at("model");
    job.model.in_bands = mm.at("in_bands").get<int>();
    job.model.base_channels = mm.at("base_channels").get<int>();
    job.model.depth = mm.at("depth").get<int>();
    job.model.attention_rank = mm.at("attention_rank").get<int>();
    job.model.attention_mode = net::attention_from_string(mm.at("attention_mode").get<std::string>());
    job.model.seed = mm.at("seed").get<std::uint64_t>();
    const auto& mt = m.at("train");
    job.training.alpha = mt.at("alpha").get<double>();
    job.training.group.size = mt.at("group_size").get<int>();
    job.training.lr = mt.at("lr").get<double>();
    job.training.iterations = mt.at("iterations").get<int>();
    job.training.seed = mt.at("seed").get<std::uint64_t>();
    job.training.log_every = mt.at("log_every").get<int>();
    job.training.data_consistency_output = mt.at("data_consistency_output").get<bool>();
    return job;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": manifest missing fields: " + e.what());
  }
}

}  // namespace hei
