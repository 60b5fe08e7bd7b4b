#include "planforge/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "planforge/errors.hpp"

namespace planforge {
namespace {

constexpr char kMagic[8] = {'P', 'F', 'C', 'K', 'P', 'T', 0, 0};

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw ParseError("checkpoint: truncated file");
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

void write_f32(std::ostream& os, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  write_u32(os, bits);
}

float read_f32(std::istream& is) {
  const std::uint32_t bits = read_u32(is);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace

Json config_to_json(const nn::ModelConfig& c) {
  return {{"d", c.dim},
          {"L", c.layers},
          {"h", c.heads},
          {"ffn_multiplier", c.ffnMultiplier},
          {"gcn_layers", c.gcnLayers},
          {"max_elements", c.maxElements},
          {"N_c", c.numCategories},
          {"share_transformer", c.shareTransformer}};
}

nn::ModelConfig config_from_json(const Json& j) {
  nn::ModelConfig c;
  c.dim = j.value("d", c.dim);
  c.layers = j.value("L", c.layers);
  c.heads = j.value("h", c.heads);
  c.ffnMultiplier = j.value("ffn_multiplier", c.ffnMultiplier);
  c.gcnLayers = j.value("gcn_layers", c.gcnLayers);
  c.maxElements = j.value("max_elements", c.maxElements);
  c.numCategories = j.value("N_c", c.numCategories);
  c.shareTransformer = j.value("share_transformer", c.shareTransformer);
  return c;
}

void save_checkpoint(const std::string& path, const ModelBundle& bundle) {
  Json header = {{"config", config_to_json(bundle.model.config)},
                 {"vocab",
                  {{"version", bundle.vocab.version()},
                   {"categories", bundle.vocab.names()},
                   {"hash", bundle.vocab.hash()}}},
                 {"stats", Json::parse(stats_to_json(bundle.stats, bundle.vocab))},
                 {"meta", bundle.meta}};
  const std::string text = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw ConfigError("checkpoint: cannot write " + tmp);
    os.write(kMagic, sizeof kMagic);
    write_u32(os, kCheckpointVersion);
    write_u32(os, static_cast<std::uint32_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));

    std::vector<std::pair<std::string, const nn::Matrix<float>*>> blocks;
    const_cast<nn::PlanModel<float>&>(bundle.model)
        .visit([&](const std::string& name, nn::Matrix<float>& p, bool) { blocks.emplace_back(name, &p); });
    write_u32(os, static_cast<std::uint32_t>(blocks.size()));
    for (const auto& [name, m] : blocks) {
      write_u32(os, static_cast<std::uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_u32(os, static_cast<std::uint32_t>(m->rows()));
      write_u32(os, static_cast<std::uint32_t>(m->cols()));
      for (Eigen::Index i = 0; i < m->size(); ++i) write_f32(os, m->data()[i]);
    }
    if (!os) throw ConfigError("checkpoint: write failed for " + tmp);
  }
  std::rename(tmp.c_str(), path.c_str());
}

ModelBundle load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("checkpoint: cannot open " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw ParseError("checkpoint: bad magic in " + path, 0);
  const std::uint32_t version = read_u32(is);
  if (version != kCheckpointVersion)
    throw ParseError("checkpoint: unsupported version " + std::to_string(version), 8);
  std::string text(read_u32(is), '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(text.size())))
    throw ParseError("checkpoint: truncated header");
  const Json header = Json::parse(text);

  std::vector<std::string> names = header.at("vocab").at("categories").get<std::vector<std::string>>();
  if (names.size() < 2) throw ParseError("checkpoint: vocabulary lacks door categories");
  names.resize(names.size() - 2);
  ModelBundle bundle{nn::PlanModel<float>(config_from_json(header.at("config"))),
                     Vocabulary(names, header.at("vocab").at("version").get<std::string>()),
                     {},
                     header.value("meta", Json::object())};
  if (bundle.vocab.hash() != header.at("vocab").value("hash", std::string()))
    throw ParseError("checkpoint: vocabulary hash mismatch");
  if (bundle.model.config.numCategories != bundle.vocab.num_categories())
    throw ParseError("checkpoint: N_c does not match vocabulary");
  bundle.stats = stats_from_json(header.at("stats"), bundle.vocab);

  std::map<std::string, nn::Matrix<float>> blocks;
  const std::uint32_t count = read_u32(is);
  for (std::uint32_t b = 0; b < count; ++b) {
    std::string name(read_u32(is), '\0');
    if (!is.read(name.data(), static_cast<std::streamsize>(name.size())))
      throw ParseError("checkpoint: truncated block name");
    const std::uint32_t rows = read_u32(is), cols = read_u32(is);
    nn::Matrix<float> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = read_f32(is);
    blocks.emplace(std::move(name), std::move(m));
  }
  bundle.model.visit([&](const std::string& name, nn::Matrix<float>& p, bool) {
    auto it = blocks.find(name);
    if (it == blocks.end()) throw ParseError("checkpoint: missing parameter block " + name);
    if (it->second.rows() != p.rows() || it->second.cols() != p.cols())
      throw ParseError("checkpoint: block " + name + " has wrong shape");
    p = std::move(it->second);
  });
  return bundle;
}

}  // namespace planforge
