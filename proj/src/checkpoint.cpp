#include "embreg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "embreg/errors.hpp"

namespace embreg {

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(std::string_view in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[i])) << (8 * i);
  return v;
}

void put_f32(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

float get_f32(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<float>(bits);
}

struct Parsed {
  CheckpointMeta meta;
  nlohmann::json tensors;
  std::string_view payload;
};

Parsed parse(std::string_view bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw DataError("not an embreg checkpoint (bad magic)");
  const std::uint64_t meta_len = get_u64(bytes.substr(8, 8));
  if (meta_len > bytes.size() - 16) throw DataError("checkpoint metadata length exceeds file size");
  Parsed p;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.substr(16, meta_len));
    p.meta.version = j.at("version").get<int>();
    p.meta.config = j.at("hyper_config").get<ModelConfig>();
    p.meta.src_vocab_hash = j.at("vocab_hashes").at("src").get<std::string>();
    p.meta.tgt_vocab_hash = j.at("vocab_hashes").at("tgt").get<std::string>();
    p.tensors = j.at("tensors");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint metadata is malformed: ") + e.what());
  }
  if (p.meta.version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(p.meta.version));
  p.payload = bytes.substr(16 + meta_len);

  std::uint64_t expected = 0;
  for (const auto& t : p.tensors) {
    const auto offset = t.at("offset").get<std::uint64_t>();
    if (offset != expected)
      throw DataError("checkpoint tensor " + t.at("name").get<std::string>() + " has offset " +
                      std::to_string(offset) + ", expected " + std::to_string(expected));
    expected += 4 * shape_numel(t.at("shape").get<Shape>());
  }
  if (expected != p.payload.size())
    throw DataError("checkpoint payload is " + std::to_string(p.payload.size()) + " bytes, manifest needs " +
                    std::to_string(expected));
  return p;
}

void fill(Seq2SeqModel& model, const Parsed& p, bool trainable_only) {
  auto params = model.parameters();
  if (params.size() != p.tensors.size())
    throw DataError("checkpoint has " + std::to_string(p.tensors.size()) + " tensors, model expects " +
                    std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = p.tensors[i];
    Parameter& dst = *params[i];
    if (t.at("name").get<std::string>() != dst.name || t.at("shape").get<Shape>() != dst.value.shape)
      throw DataError("checkpoint tensor " + std::to_string(i) + " does not match parameter " + dst.name);
    if (trainable_only && !dst.trainable) continue;
    const char* src = p.payload.data() + t.at("offset").get<std::uint64_t>();
    for (std::size_t k = 0; k < dst.value.data.size(); ++k) dst.value.data[k] = get_f32(src + 4 * k);
  }
}

}  // namespace

std::string serialize_checkpoint(const Seq2SeqModel& model, const std::string& src_vocab_hash,
                                 const std::string& tgt_vocab_hash) {
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  const auto params = model.parameters();
  for (const Parameter* p : params) {
    tensors.push_back({{"name", p->name}, {"shape", p->value.shape}, {"offset", offset}});
    offset += 4 * p->value.data.size();
  }
  nlohmann::json meta = {{"version", kCheckpointVersion},
                         {"hyper_config", model.config()},
                         {"vocab_hashes", {{"src", src_vocab_hash}, {"tgt", tgt_vocab_hash}}},
                         {"tensors", tensors}};
  const std::string text = meta.dump();
  std::string out(kCheckpointMagic, 8);
  put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + offset);
  for (const Parameter* p : params)
    for (double v : p->value.data) put_f32(out, v);
  return out;
}

CheckpointMeta read_checkpoint_meta(std::string_view bytes) { return parse(bytes).meta; }

std::unique_ptr<Seq2SeqModel> deserialize_checkpoint(std::string_view bytes, CheckpointMeta* meta) {
  Parsed p = parse(bytes);
  auto model = std::make_unique<Seq2SeqModel>(p.meta.config);
  fill(*model, p, false);
  if (meta) *meta = p.meta;
  return model;
}

void load_parameters(Seq2SeqModel& model, std::string_view bytes, bool trainable_only) {
  fill(model, parse(bytes), trainable_only);
}

void save_checkpoint(const std::string& path, const Seq2SeqModel& model, const std::string& src_vocab_hash,
                     const std::string& tgt_vocab_hash) {
  const std::string bytes = serialize_checkpoint(model, src_vocab_hash, tgt_vocab_hash);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path);
}

std::unique_ptr<Seq2SeqModel> load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str(), meta);
}

void round_to_float(Seq2SeqModel& model) {
  for (Parameter* p : model.parameters())
    for (double& v : p->value.data) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace embreg
