#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "embreg/model.hpp"

namespace embreg {

inline constexpr char kCheckpointMagic[8] = {'E', 'M', 'B', 'R', 'E', 'G', '1', '\0'};
inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
  int version = kCheckpointVersion;
  ModelConfig config;
  std::string src_vocab_hash;
  std::string tgt_vocab_hash;
};

/// Layout: 8-byte magic, u64 LE metadata length, UTF-8 JSON metadata, then every
/// parameter as little-endian float32 in manifest order.
std::string serialize_checkpoint(const Seq2SeqModel& model, const std::string& src_vocab_hash,
                                 const std::string& tgt_vocab_hash);

// Validates magic, manifest offsets and total length. Throws DataError.
CheckpointMeta read_checkpoint_meta(std::string_view bytes);

std::unique_ptr<Seq2SeqModel> deserialize_checkpoint(std::string_view bytes, CheckpointMeta* meta = nullptr);

/// Overwrites the model's parameters from a checkpoint of the same architecture.
/// With trainable_only, frozen parameters keep their current values.
void load_parameters(Seq2SeqModel& model, std::string_view bytes, bool trainable_only = false);

void save_checkpoint(const std::string& path, const Seq2SeqModel& model, const std::string& src_vocab_hash,
                     const std::string& tgt_vocab_hash);
std::unique_ptr<Seq2SeqModel> load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

// Rounds every parameter to the nearest float32 (the checkpoint precision).
void round_to_float(Seq2SeqModel& model);

}  // namespace embreg
