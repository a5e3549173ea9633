#include "csd/synth.hpp"

#include <algorithm>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include "csd/text.hpp"

namespace csd {

TemplateBank TemplateBank::standard() {
  TemplateBank b;
  b.cs_cues = {{
      {""},
      {"请问", "想问问"},
      {"您老", "老人家"},
      {"以前", "小时候"},
      {"说说看", "讲一讲"},
      {"真有趣", "好玩的是"},
      {"别担心", "没关系"},
  }};
  b.emotion_cues = {{
      {""},
      {"真恶心", "很讨厌"},
      {"有点难过", "很伤心"},
      {"好害怕", "很恐惧"},
      {"太惊讶了", "真意外"},
      {"我喜欢", "很爱"},
      {"很开心", "真高兴"},
      {"很生气", "气死了"},
  }};
  b.strategy_cues = {{
      {"。"},
      {"吗？", "呢？"},
      {"，我懂你的感受。", "，能理解你。"},
      {"，我也是这样。", "，我自己也去过。"},
      {"，建议多休息。", "，不如试试看。"},
      {"，听说很便宜。", "，每周三开门。"},
      {"，哈哈。", "，好吧。"},
  }};
  b.topics = {"头发",   "社区中心", "公园",   "老歌",   "孙子", "花园", "菜市场", "太极拳",
              "京剧",   "饺子",     "老照片", "茶馆",   "广场舞", "毛笔字", "象棋", "南屏晚钟",
              "月饼",   "二胡",     "钓鱼",   "邻居"};
  b.frames = {"{}", "去{}", "{}的事", "那个{}", "关于{}"};

  // Label counts as published for the real corpus.
  b.cs_weights = {5296, 4156, 2134, 464, 2651, 1862, 281};
  b.emotion_weights = {12060, 273, 629, 62, 355, 1317, 1954, 193};
  b.strategy_weights = {7060, 4195, 293, 3022, 262, 819, 1190};

  b.lexicon = {
      {"开心", 7.6, 6.2}, {"高兴", 7.4, 6.0}, {"难过", 2.3, 4.5}, {"伤心", 2.0, 4.8}, {"害怕", 2.4, 6.9},
      {"恐惧", 1.9, 7.2}, {"惊讶", 5.8, 7.4}, {"意外", 5.2, 6.8}, {"喜欢", 7.3, 5.1}, {"爱", 7.8, 5.9},
      {"生气", 2.1, 7.6}, {"恶心", 1.7, 5.8}, {"讨厌", 2.2, 5.6}, {"担心", 3.0, 5.5}, {"休息", 6.0, 2.5},
      {"有趣", 7.0, 5.4}, {"好玩", 7.2, 5.8}, {"便宜", 6.2, 4.0}, {"理解", 6.4, 3.8}, {"公园", 6.0, 3.5},
      {"花园", 6.3, 3.4}, {"老歌", 6.1, 3.9}, {"月饼", 6.5, 4.1}, {"钓鱼", 6.2, 3.6}, {"孙子", 6.9, 5.0},
  };
  return b;
}

std::vector<std::string> TemplateBank::word_list() const {
  std::set<std::string> words;
  auto add = [&](const std::string& phrase) {
    if (text::tokenize(phrase).size() >= 2) words.insert(phrase);
  };
  for (const auto& t : topics) add(t);
  for (const auto& e : lexicon) add(e.word);
  for (const auto& pool : cs_cues) {
    for (const auto& c : pool) add(c);
  }
  for (const auto& s : {"请问", "以前", "小时候", "老人家", "没关系", "感受", "试试", "每周"}) add(s);
  return {words.begin(), words.end()};
}

std::string TemplateBank::lexicon_tsv() const {
  std::ostringstream os;
  os << "#r_min=1\tr_max=9\n";
  for (const auto& e : lexicon) {
    os << e.word << '\t' << std::setprecision(3) << e.valence << '\t' << e.arousal << '\n';
  }
  return os.str();
}

namespace {

template <std::size_t N>
int draw(const std::array<double, N>& weights, std::mt19937_64& rng) {
  std::discrete_distribution<int> d(weights.begin(), weights.end());
  return d(rng);
}

const std::string& pick(const std::vector<std::string>& pool, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
  return pool[d(rng)];
}

std::string fill_frame(const std::string& frame, const std::string& topic) {
  std::string out = frame;
  const auto pos = out.find("{}");
  if (pos != std::string::npos) out.replace(pos, 2, topic);
  return out;
}

}  // namespace

Corpus synthesize_corpus(std::uint64_t seed, int n_conversations, const TemplateBank& bank,
                         const SynthOptions& opts) {
  std::mt19937_64 rng(seed);
  Corpus corpus;
  corpus.conversations.reserve(static_cast<std::size_t>(std::max(0, n_conversations)));
  std::uniform_int_distribution<int> len_dist(std::max(2, opts.min_utterances),
                                              std::max(std::max(2, opts.min_utterances), opts.max_utterances));
  for (int c = 0; c < n_conversations; ++c) {
    Conversation conv;
    const int len = len_dist(rng);
    const std::string& topic = pick(bank.topics, rng);
    for (int i = 0; i < len; ++i) {
      Utterance u;
      u.role = i % 2 == 0 ? Role::Speaker : Role::Listener;
      const int cs = draw(bank.cs_weights, rng);
      const int emo = draw(bank.emotion_weights, rng);
      const int str = draw(bank.strategy_weights, rng);
      u.cs = static_cast<CSLabel>(cs);
      u.emo = static_cast<EmotionLabel>(emo);
      u.strategy = static_cast<StrategyLabel>(str);

      std::string body = pick(bank.cs_cues[static_cast<std::size_t>(cs)], rng);
      body += fill_frame(pick(bank.frames, rng), topic);
      const std::string& emo_cue = pick(bank.emotion_cues[static_cast<std::size_t>(emo)], rng);
      if (!emo_cue.empty()) body += "，" + emo_cue;
      body += pick(bank.strategy_cues[static_cast<std::size_t>(str)], rng);
      u.text = std::move(body);
      conv.utterances.push_back(std::move(u));
    }
    corpus.conversations.push_back(std::move(conv));
  }
  return corpus;
}

}  // namespace csd
