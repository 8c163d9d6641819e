#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sluadv/corpus.hpp"

namespace sluadv {

struct EncodedUtterance {
  std::vector<std::int32_t> tokens;
  std::vector<std::int32_t> slots;
  std::int32_t intent = 0;
  std::int32_t language = 0;
};

/// Encodes against `vocab`; unknown tokens become UNK, unknown labels throw.
EncodedUtterance encode(const Vocabulary& vocab, const Utterance& u);
std::vector<EncodedUtterance> encode(const Vocabulary& vocab, const Corpus& corpus);

/// A padded mini-batch. Position (b, t) lives at row b * max_len + t of every
/// token-level tensor; `mask` marks the valid positions, which always form a
/// prefix of each row.
struct EncodedBatch {
  std::size_t batch_size = 0;
  std::size_t max_len = 0;
  std::vector<std::int32_t> tokens;  // batch_size * max_len, PAD beyond length
  std::vector<std::int32_t> slots;   // batch_size * max_len, 0 beyond length
  std::vector<std::uint8_t> mask;    // batch_size * max_len
  std::vector<std::size_t> lengths;
  std::vector<std::int32_t> intents;
  std::vector<std::int32_t> languages;

  std::size_t rows() const noexcept { return batch_size * max_len; }
  bool valid(std::size_t b, std::size_t t) const { return mask[b * max_len + t] != 0; }
};

EncodedBatch make_batch(std::span<const EncodedUtterance* const> items);
EncodedBatch make_batch(std::span<const EncodedUtterance> items);

}  // namespace sluadv
