#ifndef CSD_MASKING_HPP
#define CSD_MASKING_HPP

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "csd/corpus.hpp"
#include "csd/lexicon.hpp"
#include "csd/vocab.hpp"

namespace csd::masking {

inline constexpr int kStages = 5;

/// Stage k (1..4) masks k-token dictionary entities with probability
/// lambdas[k-1]; stage 5 masks whole dictionary sentences with lambdas[4].
struct MaskSchedule {
  std::array<double, kStages> lambdas{0.9, 0.9, 0.9, 0.9, 0.4};
  std::array<double, kStages> stage_boundaries{0.2, 0.4, 0.6, 0.8, 1.0};
  double base_mask_rate = 0.05;
  double split_mask = 0.8;
  double split_random = 0.1;
  double split_keep = 0.1;
  /// When false only classic token-level masking runs (no dictionary spans).
  bool progressive = true;
  double classic_token_rate = 0.15;
  /// Apply the base-rate selection to single tokens instead of entities.
  bool base_on_tokens = false;
};

MaskSchedule keyword_schedule();
MaskSchedule emotion_schedule();
/// Throws std::invalid_argument on a schedule that breaks its invariants.
void validate(const MaskSchedule& s);

int current_stage(long step, long total, const MaskSchedule& s);

/// "[CLS] a [SEP] b [SEP]" (or "[CLS] a [SEP]" when b is empty) with segment
/// ids 0 for the first part and 1 for the second.
struct PretrainSequence {
  std::vector<int> ids;
  std::vector<std::string> tokens;
  std::vector<int> segment_ids;
  /// Text ranges [begin, end) of the two parts inside ids.
  std::vector<std::pair<std::size_t, std::size_t>> parts;
  bool nsp_label = false;
};

PretrainSequence make_pretrain_sequence(std::span<const std::string> a, std::span<const std::string> b,
                                        const Vocabulary& vocab);

enum class MaskKind { Progressive, Classic, Token };

struct MaskedSpan {
  std::size_t begin = 0;
  std::size_t length = 0;
  MaskKind kind = MaskKind::Progressive;
};

struct MaskedExample {
  std::vector<int> input_ids;
  std::vector<int> segment_ids;
  std::map<int, int> mlm_targets;  // position -> original id
  bool nsp_label = false;
  int stage = 1;
  std::vector<MaskedSpan> spans;
  /// Dictionary occurrences eligible for progressive masking, and how many
  /// were masked, indexed by stage - 1.
  std::array<long, kStages> eligible{};
  std::array<long, kStages> masked{};
};

MaskedExample mask_example(const PretrainSequence& seq, const knowledge::KnowledgeDict& dict, int stage,
                           const MaskSchedule& sched, const Vocabulary& vocab, std::mt19937_64& rng);

struct NspPair {
  std::size_t conv_a = 0, utt_a = 0;
  std::size_t conv_b = 0, utt_b = 0;
  bool is_next = false;
};

/// Half consecutive pairs, half pairs drawn across two different
/// conversations. `force` pins the pair type.
NspPair make_nsp_pair(const Corpus& corpus, std::mt19937_64& rng, std::optional<bool> force = std::nullopt);

struct MaskRates {
  std::array<double, kStages> ratio{};
  std::array<long, kStages> eligible{};
  std::array<long, kStages> masked{};
};

MaskRates measure_mask_rate(std::span<const MaskedExample> examples);

}  // namespace csd::masking

#endif  // CSD_MASKING_HPP
