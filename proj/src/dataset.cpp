#include "catres/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>

#include "catres/error.hpp"
#include "catres/hash.hpp"
#include "json.hpp"

namespace catres {

namespace {

using nlohmann::json;

constexpr char kWeightsMagic[4] = {'C', 'R', 'W', '1'};
constexpr char kEmbeddingsMagic[4] = {'C', 'R', 'E', '1'};
constexpr std::size_t kHeaderBytes = 16;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& buf, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[offset + i])) << (8 * i);
  return v;
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }
float get_f32(const std::string& buf, std::size_t offset) { return std::bit_cast<float>(get_u32(buf, offset)); }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::string dump_line(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

}  // namespace

std::string to_string(const NeuronRef& ref) {
  return "(" + std::to_string(ref.layer) + "," + std::to_string(ref.index) + ")";
}

bool activation_order(const TokenEntry& a, const TokenEntry& b) {
  if (a.activation != b.activation) return a.activation > b.activation;
  return a.id < b.id;
}

std::optional<double> ActivationProfile::activation_of(TokenId id) const {
  for (const auto& e : entries) {
    if (e.id == id) return e.activation;
  }
  return std::nullopt;
}

std::span<const float> LayerWeights::row(std::size_t target) const {
  if (target >= target_size) throw NotFoundError("weight row " + std::to_string(target) + " out of range");
  return {matrix.data() + target * source_size, source_size};
}

EmbeddingTable::EmbeddingTable(std::size_t dimension, std::vector<float> data,
                               std::map<TokenId, std::string> surfaces)
    : dimension_(dimension), data_(std::move(data)), surfaces_(std::move(surfaces)) {
  if (dimension_ == 0) throw ValidationError("embedding dimension must be positive");
  if (data_.size() % dimension_ != 0) {
    throw DimensionError("embedding data length " + std::to_string(data_.size()) +
                         " is not a multiple of dimension " + std::to_string(dimension_));
  }
  const std::size_t rows = data_.size() / dimension_;
  norms_.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < dimension_; ++c) {
      const double v = data_[r * dimension_ + c];
      if (!std::isfinite(v)) throw ValidationError("non-finite embedding value for token " + std::to_string(r));
      sq += v * v;
    }
    if (sq == 0.0) throw ValidationError("zero embedding vector for token " + std::to_string(r));
    norms_[r] = std::sqrt(sq);
  }
  for (const auto& [id, _] : surfaces_) {
    if (!contains(id)) throw ValidationError("vocabulary id " + std::to_string(id) + " has no embedding row");
  }
}

std::span<const float> EmbeddingTable::row(TokenId id) const {
  if (!contains(id)) throw NotFoundError("token id " + std::to_string(id) + " not in embedding table");
  return {data_.data() + static_cast<std::size_t>(id) * dimension_, dimension_};
}

double EmbeddingTable::norm(TokenId id) const {
  if (!contains(id)) throw NotFoundError("token id " + std::to_string(id) + " not in embedding table");
  return norms_[static_cast<std::size_t>(id)];
}

// ---------------------------------------------------------------------------
// profiles

ProfileMap parse_profiles(std::istream& in, const std::string& source_name) {
  ProfileMap out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(source_name, line_no, std::string("malformed JSON: ") + e.what());
    }
    ActivationProfile profile;
    try {
      profile.neuron.layer = rec.at("layer").get<int>();
      profile.neuron.index = rec.at("neuron").get<int>();
      const auto& tokens = rec.at("tokens");
      if (!tokens.is_array()) throw ParseError(source_name, line_no, "\"tokens\" must be an array");
      profile.entries.reserve(tokens.size());
      for (const auto& tok : tokens) {
        if (!tok.at("id").is_number_integer()) throw ParseError(source_name, line_no, "token id must be an integer");
        if (!tok.at("a").is_number()) throw ParseError(source_name, line_no, "activation must be a number");
        TokenEntry e;
        e.id = tok.at("id").get<TokenId>();
        e.surface = tok.at("t").get<std::string>();
        e.activation = tok.at("a").get<double>();
        profile.entries.push_back(std::move(e));
      }
    } catch (const json::exception& e) {
      throw ParseError(source_name, line_no, std::string("bad record: ") + e.what());
    }
    const std::string who = "neuron " + to_string(profile.neuron);
    if (profile.neuron.layer < 0 || profile.neuron.index < 0) {
      throw ParseError(source_name, line_no, "negative layer or neuron index for " + who);
    }
    std::set<TokenId> seen;
    for (const auto& e : profile.entries) {
      if (e.id < 0) throw ValidationError("negative token id in " + who);
      if (!std::isfinite(e.activation)) {
        throw ValidationError("non-finite activation for token " + std::to_string(e.id) + " in " + who);
      }
      if (!seen.insert(e.id).second) {
        throw ValidationError("duplicate token id " + std::to_string(e.id) + " in " + who);
      }
    }
    std::sort(profile.entries.begin(), profile.entries.end(), activation_order);
    const NeuronRef key = profile.neuron;
    if (!out.emplace(key, std::move(profile)).second) {
      throw ValidationError(source_name + ":" + std::to_string(line_no) + ": duplicate record for " + who);
    }
  }
  return out;
}

ProfileMap load_profiles(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_profiles(in, path.string());
}

void write_profiles(const std::filesystem::path& path, const ProfileMap& profiles) {
  std::string out;
  for (const auto& [ref, profile] : profiles) {
    json tokens = json::array();
    for (const auto& e : profile.entries) tokens.push_back({{"id", e.id}, {"t", e.surface}, {"a", e.activation}});
    out += dump_line({{"layer", ref.layer}, {"neuron", ref.index}, {"tokens", std::move(tokens)}});
    out += '\n';
  }
  write_file(path, out);
}

// ---------------------------------------------------------------------------
// weights

LayerWeights load_weights(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  if (buf.size() < kHeaderBytes || !std::equal(kWeightsMagic, kWeightsMagic + 4, buf.begin())) {
    throw ValidationError(path.string() + ": not a CRW1 weights file");
  }
  LayerWeights w;
  w.target_size = get_u32(buf, 4);
  w.source_size = get_u32(buf, 8);
  w.source_layer = static_cast<int>(get_u32(buf, 12));
  w.target_layer = w.source_layer + 1;
  const std::size_t n_weights = w.target_size * w.source_size;
  const std::size_t expected = kHeaderBytes + 4 * (n_weights + w.target_size);
  if (buf.size() != expected) {
    throw DimensionError(path.string() + ": header declares " + std::to_string(w.target_size) + "x" +
                         std::to_string(w.source_size) + " (" + std::to_string(expected) +
                         " bytes) but file has " + std::to_string(buf.size()) + " bytes");
  }
  w.matrix.resize(n_weights);
  w.bias.resize(w.target_size);
  std::size_t off = kHeaderBytes;
  for (auto& v : w.matrix) {
    v = get_f32(buf, off);
    off += 4;
  }
  for (auto& v : w.bias) {
    v = get_f32(buf, off);
    off += 4;
  }
  for (std::size_t i = 0; i < n_weights; ++i) {
    if (!std::isfinite(w.matrix[i])) {
      throw ValidationError(path.string() + ": non-finite weight at target " + std::to_string(i / w.source_size) +
                            ", source " + std::to_string(i % w.source_size));
    }
  }
  for (std::size_t i = 0; i < w.target_size; ++i) {
    if (!std::isfinite(w.bias[i])) throw ValidationError(path.string() + ": non-finite bias at target " + std::to_string(i));
  }
  return w;
}

void write_weights(const std::filesystem::path& path, const LayerWeights& w) {
  if (w.matrix.size() != w.target_size * w.source_size || w.bias.size() != w.target_size) {
    throw DimensionError("weights: matrix/bias length does not match declared sizes");
  }
  std::string out(kWeightsMagic, 4);
  out.reserve(kHeaderBytes + 4 * (w.matrix.size() + w.bias.size()));
  put_u32(out, static_cast<std::uint32_t>(w.target_size));
  put_u32(out, static_cast<std::uint32_t>(w.source_size));
  put_u32(out, static_cast<std::uint32_t>(w.source_layer));
  for (float v : w.matrix) put_f32(out, v);
  for (float v : w.bias) put_f32(out, v);
  write_file(path, out);
}

// ---------------------------------------------------------------------------
// embeddings

std::map<TokenId, std::string> load_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::map<TokenId, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json rec = json::parse(line);
      const TokenId id = rec.at("id").get<TokenId>();
      if (!out.emplace(id, rec.at("t").get<std::string>()).second) {
        throw ParseError(path.string(), line_no, "duplicate vocabulary id " + std::to_string(id));
      }
    } catch (const json::exception& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
  return out;
}

void write_vocabulary(const std::filesystem::path& path, const std::map<TokenId, std::string>& surfaces) {
  std::string out;
  for (const auto& [id, t] : surfaces) {
    out += dump_line({{"id", id}, {"t", t}});
    out += '\n';
  }
  write_file(path, out);
}

std::filesystem::path default_vocabulary_path(const std::filesystem::path& embeddings_path) {
  return std::filesystem::path(embeddings_path.string() + ".vocab.jsonl");
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, std::optional<std::filesystem::path> vocabulary) {
  const std::string buf = read_file(path);
  if (buf.size() < kHeaderBytes || !std::equal(kEmbeddingsMagic, kEmbeddingsMagic + 4, buf.begin())) {
    throw ValidationError(path.string() + ": not a CRE1 embeddings file");
  }
  const std::size_t vocab = get_u32(buf, 4);
  const std::size_t dim = get_u32(buf, 8);
  const std::size_t expected = kHeaderBytes + 4 * vocab * dim;
  if (buf.size() != expected) {
    throw DimensionError(path.string() + ": header declares " + std::to_string(vocab) + "x" + std::to_string(dim) +
                         " but file has " + std::to_string(buf.size()) + " bytes");
  }
  std::vector<float> data(vocab * dim);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = get_f32(buf, kHeaderBytes + 4 * i);

  std::map<TokenId, std::string> surfaces;
  const auto vocab_path = vocabulary.value_or(default_vocabulary_path(path));
  if (vocabulary || std::filesystem::exists(vocab_path)) surfaces = load_vocabulary(vocab_path);
  return EmbeddingTable(dim, std::move(data), std::move(surfaces));
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
  std::string out(kEmbeddingsMagic, 4);
  out.reserve(kHeaderBytes + 4 * table.data().size());
  put_u32(out, static_cast<std::uint32_t>(table.size()));
  put_u32(out, static_cast<std::uint32_t>(table.dimension()));
  put_u32(out, 0);  // reserved
  for (float v : table.data()) put_f32(out, v);
  write_file(path, out);
  if (!table.surfaces().empty()) write_vocabulary(default_vocabulary_path(path), table.surfaces());
}

// ---------------------------------------------------------------------------
// assembly

std::string content_hash(const ProfileMap& profiles, const LayerWeights& weights, const EmbeddingTable& embeddings) {
  Sha256 h;
  h.update("profiles");
  h.update_u64(profiles.size());
  for (const auto& [ref, profile] : profiles) {
    h.update_u64(static_cast<std::uint64_t>(ref.layer));
    h.update_u64(static_cast<std::uint64_t>(ref.index));
    h.update_u64(profile.entries.size());
    for (const auto& e : profile.entries) {
      h.update_u64(static_cast<std::uint64_t>(e.id));
      h.update(e.surface);
      h.update_f64(e.activation);
    }
  }
  h.update("weights");
  h.update_u64(static_cast<std::uint64_t>(weights.source_layer));
  h.update_u64(weights.target_size);
  h.update_u64(weights.source_size);
  for (float v : weights.matrix) h.update_u64(std::bit_cast<std::uint32_t>(v));
  for (float v : weights.bias) h.update_u64(std::bit_cast<std::uint32_t>(v));
  h.update("embeddings");
  h.update_u64(embeddings.dimension());
  h.update_u64(embeddings.size());
  for (float v : embeddings.data()) h.update_u64(std::bit_cast<std::uint32_t>(v));
  for (const auto& [id, t] : embeddings.surfaces()) {
    h.update_u64(static_cast<std::uint64_t>(id));
    h.update(t);
  }
  return h.hex_digest();
}

ModelDataset::ModelDataset(ProfileMap profiles, LayerWeights weights, EmbeddingTable embeddings,
                           std::string source_description)
    : profiles_(std::move(profiles)), weights_(std::move(weights)), embeddings_(std::move(embeddings)) {
  if (weights_.target_layer != weights_.source_layer + 1) {
    throw ValidationError("weights must connect consecutive layers");
  }
  if (weights_.matrix.size() != weights_.target_size * weights_.source_size ||
      weights_.bias.size() != weights_.target_size) {
    throw DimensionError("weight matrix does not match declared layer sizes");
  }
  std::vector<std::string> problems;
  std::size_t dangling = 0;
  for (const auto& [ref, profile] : profiles_) {
    if (ref.layer != weights_.source_layer && ref.layer != weights_.target_layer) {
      problems.push_back("neuron " + to_string(ref) + " is outside the declared layers");
      continue;
    }
    if (static_cast<std::size_t>(ref.index) >= layer_size(ref.layer)) {
      problems.push_back("neuron " + to_string(ref) + " exceeds layer size " + std::to_string(layer_size(ref.layer)));
    }
    for (const auto& e : profile.entries) {
      if (!embeddings_.contains(e.id)) {
        if (dangling++ < 20) {
          problems.push_back("token " + std::to_string(e.id) + " of neuron " + to_string(ref) + " has no embedding");
        }
      }
    }
  }
  if (dangling > 20) problems.push_back("... " + std::to_string(dangling - 20) + " more dangling token references");
  if (!problems.empty()) {
    std::string msg = "dataset validation failed (" + std::to_string(problems.size()) + " problems):";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ValidationError(msg);
  }
  content_hash_ = catres::content_hash(profiles_, weights_, embeddings_);
  provenance_ = source_description + " sha256:" + content_hash_;
}

const ActivationProfile* ModelDataset::find(const NeuronRef& ref) const {
  auto it = profiles_.find(ref);
  return it == profiles_.end() ? nullptr : &it->second;
}

std::size_t ModelDataset::layer_size(int layer) const {
  if (layer == weights_.source_layer) return weights_.source_size;
  if (layer == weights_.target_layer) return weights_.target_size;
  return 0;
}

ModelDataset assemble_dataset(ProfileMap profiles, LayerWeights weights, EmbeddingTable embeddings,
                              std::string source_description) {
  return ModelDataset(std::move(profiles), std::move(weights), std::move(embeddings), std::move(source_description));
}

}  // namespace catres
