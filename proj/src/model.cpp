#include "winmatch/model.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace winmatch {

Model Model::init(const PipelineConfig& cfg, int stage_count) {
  cfg.validate();
  if (stage_count < 1) throw ParamError("model: need at least one stage");
  Rng rng(mix_seed(cfg.seed, 0x6d6f64656cULL));
  Model m;
  m.stages = stage_count;
  m.channels = cfg.channels;
  m.stem = StemParams::init(cfg.channels, rng);
  m.encoder = EncoderParams::init(stage_count, cfg.channels[2], rng);
  return m;
}

namespace {

void name_mbconv(const std::string& base, const MbconvParams& p,
                 std::vector<std::pair<std::string, Tensor>>& out) {
  out.emplace_back(base + ".expand.w", p.expand.w);
  out.emplace_back(base + ".expand.b", p.expand.b);
  out.emplace_back(base + ".dw.w", p.dw.w);
  out.emplace_back(base + ".dw.b", p.dw.b);
  out.emplace_back(base + ".project.w", p.project.w);
  out.emplace_back(base + ".project.b", p.project.b);
}

void name_trans(const std::string& base, const TransBlockParams& p,
                std::vector<std::pair<std::string, Tensor>>& out) {
  name_mbconv(base + ".mb", p.mb, out);
  out.emplace_back(base + ".pool_proj.w", p.pool_proj.w);
  out.emplace_back(base + ".pool_proj.b", p.pool_proj.b);
}

void name_stage(const std::string& base, const std::vector<MbBlockParams>& blocks,
                std::vector<std::pair<std::string, Tensor>>& out) {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    name_mbconv(base + "." + std::to_string(i) + ".m1", blocks[i].m1, out);
    name_mbconv(base + "." + std::to_string(i) + ".m2", blocks[i].m2, out);
  }
}

void name_attention(const std::string& base, const AttentionParams& p,
                    std::vector<std::pair<std::string, Tensor>>& out) {
  out.emplace_back(base + ".wq", p.wq);
  out.emplace_back(base + ".bq", p.bq);
  out.emplace_back(base + ".wk", p.wk);
  out.emplace_back(base + ".bk", p.bk);
  out.emplace_back(base + ".wv", p.wv);
  out.emplace_back(base + ".bv", p.bv);
  out.emplace_back(base + ".wo", p.wo);
  out.emplace_back(base + ".bo", p.bo);
  out.emplace_back(base + ".wqc", p.wqc);
  out.emplace_back(base + ".bqc", p.bqc);
  out.emplace_back(base + ".wkc", p.wkc);
  out.emplace_back(base + ".bkc", p.bkc);
  out.emplace_back(base + ".wvc", p.wvc);
  out.emplace_back(base + ".bvc", p.bvc);
  out.emplace_back(base + ".alpha_s", p.alpha_s);
  out.emplace_back(base + ".alpha_c", p.alpha_c);
  name_mbconv(base + ".mb", p.mb, out);
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> Model::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("stem.entry.w", stem.entry.w);
  out.emplace_back("stem.entry.b", stem.entry.b);
  out.emplace_back("stem.entry_norm.gamma", stem.entry_norm.gamma);
  out.emplace_back("stem.entry_norm.beta", stem.entry_norm.beta);
  name_trans("stem.t2", stem.t2, out);
  name_stage("stem.stage1", stem.stage1, out);
  name_trans("stem.t4", stem.t4, out);
  name_stage("stem.stage2", stem.stage2, out);
  name_trans("stem.t8", stem.t8, out);
  name_stage("stem.stage3", stem.stage3, out);
  name_trans("stem.t16", stem.t16, out);
  out.emplace_back("stem.merge_proj.w", stem.merge_proj.w);
  out.emplace_back("stem.merge_proj.b", stem.merge_proj.b);
  out.emplace_back("stem.merge_norm.gamma", stem.merge_norm.gamma);
  out.emplace_back("stem.merge_norm.beta", stem.merge_norm.beta);
  name_mbconv("stem.merge_mb", stem.merge_mb, out);
  for (std::size_t s = 0; s < encoder.stages.size(); ++s) {
    const std::string base = "encoder." + std::to_string(s);
    name_attention(base + ".self", encoder.stages[s].self_attn, out);
    name_attention(base + ".cross", encoder.stages[s].cross_attn, out);
  }
  return out;
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

void save_checkpoint(const Model& model, const std::string& bin_path,
                     const std::string& manifest_path) {
  const auto named = model.named_parameters();

  nlohmann::ordered_json manifest;
  manifest["format"] = "winmatch-checkpoint-v1";
  manifest["stages"] = model.stages;
  manifest["channels"] = model.channels;
  nlohmann::ordered_json params = nlohmann::ordered_json::array();
  std::size_t total = 0;
  for (const auto& [name, t] : named) {
    nlohmann::ordered_json entry;
    entry["name"] = name;
    entry["shape"] = t.shape;
    entry["offset"] = total;
    params.push_back(entry);
    total += t.numel();
  }
  manifest["parameters"] = params;
  manifest["total_values"] = total;

  std::ofstream mf(manifest_path);
  if (!mf) throw IoError("cannot write " + manifest_path);
  mf << manifest.dump(2) << "\n";
  if (!mf) throw IoError("failed writing " + manifest_path);

  // Values as little-endian IEEE float64 in manifest order.
  std::ofstream bf(bin_path, std::ios::binary);
  if (!bf) throw IoError("cannot write " + bin_path);
  for (const auto& [name, t] : named) {
    static_assert(sizeof(double) == 8);
    bf.write(reinterpret_cast<const char*>(t.data->data()),
             static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!bf) throw IoError("failed writing " + bin_path);
}

Model load_checkpoint(const PipelineConfig& cfg, const std::string& bin_path,
                      const std::string& manifest_path) {
  std::ifstream mf(manifest_path);
  if (!mf) throw IoError("cannot open " + manifest_path);
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("checkpoint manifest: invalid JSON: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "winmatch-checkpoint-v1")
    throw IoError("checkpoint manifest: unknown format tag");

  const int stages = manifest.at("stages").get<int>();
  PipelineConfig model_cfg = cfg;
  model_cfg.channels = manifest.at("channels").get<std::vector<int>>();
  Model model = Model::init(model_cfg, stages);

  const auto named = model.named_parameters();
  const auto& params = manifest.at("parameters");
  if (params.size() != named.size())
    throw IoError("checkpoint manifest: parameter count mismatch");

  std::ifstream bf(bin_path, std::ios::binary);
  if (!bf) throw IoError("cannot open " + bin_path);
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& entry = params[i];
    const Tensor& t = named[i].second;
    if (entry.at("name").get<std::string>() != named[i].first)
      throw IoError("checkpoint manifest: parameter order mismatch at " + named[i].first);
    if (entry.at("shape").get<std::vector<int>>() != t.shape)
      throw IoError("checkpoint manifest: shape mismatch at " + named[i].first);
    bf.read(reinterpret_cast<char*>(t.data->data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (bf.gcount() != static_cast<std::streamsize>(t.numel() * sizeof(double)))
      throw IoError("checkpoint: truncated value array");
  }
  char extra;
  if (bf.read(&extra, 1))
    throw IoError("checkpoint: trailing bytes after the declared parameters");
  return model;
}

}  // namespace winmatch
