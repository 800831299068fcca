// Copyright 2026 The svdrank Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Corpus, label and split model for subjective voice descriptor (SVD)
// experiments.
//
// A corpus is a list of utterances with speaker, gender and sentence identity.
// Labels come in two formats: absolute 1-5 ratings of one utterance (ACR) and
// forced four-way comparisons of an ordered utterance pair (CCR). A SplitPlan
// partitions the labels of one SVD so that every test comparison involves at
// least one speaker that never appears in training data.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "svdrank/error.hpp"
#include "svdrank/rng.hpp"

namespace svdrank {

using json = nlohmann::json;

enum class Gender { male, female };
enum class GenderScope { male, female, any };

inline std::string_view gender_code(Gender g) {
  return g == Gender::male ? "M" : "F";
}

inline std::optional<Gender> parse_gender(std::string_view s) {
  if (s == "M") return Gender::male;
  if (s == "F") return Gender::female;
  return std::nullopt;
}

inline bool in_scope(GenderScope scope, Gender g) {
  switch (scope) {
    case GenderScope::any: return true;
    case GenderScope::male: return g == Gender::male;
    case GenderScope::female: return g == Gender::female;
  }
  return false;
}

enum class SourceKind { audio, feature };

struct Utterance {
  std::string id;
  std::string speaker_id;
  Gender gender = Gender::female;
  std::string sentence_id;
  double duration_s = 0.0;
  SourceKind source_kind = SourceKind::feature;
  std::string source_path;  // relative to the manifest directory unless absolute
};

struct Svd {
  std::string id;
  std::string description;
  GenderScope gender_scope = GenderScope::any;
};

// Descriptors used in the original study; any other id is accepted with an
// unrestricted gender scope.
inline Svd svd_from_id(const std::string& id) {
  if (id == "youthfulF")
    return {id, "youthful-sounding voice (female speakers)", GenderScope::female};
  if (id == "youthfulM")
    return {id, "youthful-sounding voice (male speakers)", GenderScope::male};
  if (id == "resonantM")
    return {id, "resonant voice (male speakers)", GenderScope::male};
  return {id, id, GenderScope::any};
}

// ---------------------------------------------------------------------------
// Corpus

class Corpus {
 public:
  Corpus() = default;

  // Validates utterance invariants; throws ValidationError on violation.
  explicit Corpus(std::vector<Utterance> utterances)
      : utts_(std::move(utterances)) {
    for (std::size_t i = 0; i < utts_.size(); ++i) {
      const Utterance& u = utts_[i];
      if (u.id.empty()) throw ValidationError("utterance with empty id");
      if (!(u.duration_s > 0.0))
        throw ValidationError("utterance \"" + u.id +
                              "\": duration_s must be > 0");
      if (!by_id_.emplace(u.id, i).second)
        throw ValidationError("duplicate utterance id \"" + u.id + "\"");
      by_speaker_[u.speaker_id].push_back(i);
      groups_[{u.sentence_id, u.gender}].push_back(i);
    }
  }

  std::size_t size() const { return utts_.size(); }
  bool empty() const { return utts_.empty(); }
  const std::vector<Utterance>& utterances() const { return utts_; }
  const Utterance& operator[](std::size_t i) const { return utts_[i]; }

  const Utterance* find(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &utts_[it->second];
  }

  const Utterance& at(const std::string& id) const {
    const Utterance* u = find(id);
    if (!u) throw ValidationError("unknown utterance \"" + id + "\"");
    return *u;
  }

  // Sorted list of speakers with at least one utterance inside `scope`.
  std::vector<std::string> speakers(GenderScope scope = GenderScope::any) const {
    std::vector<std::string> out;
    for (const auto& [spk, idx] : by_speaker_) {
      if (std::any_of(idx.begin(), idx.end(), [&](std::size_t i) {
            return in_scope(scope, utts_[i].gender);
          }))
        out.push_back(spk);
    }
    return out;
  }

  std::vector<std::size_t> in_scope_indices(GenderScope scope) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < utts_.size(); ++i)
      if (in_scope(scope, utts_[i].gender)) out.push_back(i);
    return out;
  }

  // Utterance indices grouped by (sentence_id, gender); only these groups can
  // form comparison pairs.
  const std::map<std::pair<std::string, Gender>, std::vector<std::size_t>>&
  pair_groups() const {
    return groups_;
  }

 private:
  std::vector<Utterance> utts_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::map<std::string, std::vector<std::size_t>> by_speaker_;
  std::map<std::pair<std::string, Gender>, std::vector<std::size_t>> groups_;
};

namespace detail {

inline std::string line_ctx(const std::string& path, std::size_t line) {
  return path + ":" + std::to_string(line) + ": ";
}

inline json parse_json_line(const std::string& text, const std::string& path,
                            std::size_t line) {
  try {
    json j = json::parse(text);
    if (!j.is_object()) throw ParseError(line_ctx(path, line) + "expected a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw ParseError(line_ctx(path, line) + e.what());
  }
}

template <class T>
T field(const json& j, const char* key, const std::string& path,
        std::size_t line) {
  auto it = j.find(key);
  if (it == j.end())
    throw ParseError(line_ctx(path, line) + "missing key \"" + key + "\"");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ParseError(line_ctx(path, line) + "bad type for key \"" + key + "\"");
  }
}

// Calls fn(json, line_number) for every non-blank line.
template <class Fn>
void for_each_jsonl(std::istream& in, const std::string& path, Fn&& fn) {
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    fn(parse_json_line(text, path, line), line);
  }
}

}  // namespace detail

inline Utterance utterance_from_json(const json& j, const std::string& path = "<manifest>",
                                     std::size_t line = 0) {
  using detail::field;
  Utterance u;
  u.id = field<std::string>(j, "id", path, line);
  u.speaker_id = field<std::string>(j, "speaker_id", path, line);
  const auto g = field<std::string>(j, "gender", path, line);
  auto gender = parse_gender(g);
  if (!gender)
    throw ParseError(detail::line_ctx(path, line) + "gender must be \"M\" or \"F\"");
  u.gender = *gender;
  u.sentence_id = field<std::string>(j, "sentence_id", path, line);
  u.duration_s = field<double>(j, "duration_s", path, line);
  const bool has_audio = j.contains("audio_path");
  const bool has_feature = j.contains("feature_path");
  if (has_audio == has_feature)
    throw ParseError(detail::line_ctx(path, line) +
                     "exactly one of audio_path / feature_path required");
  u.source_kind = has_audio ? SourceKind::audio : SourceKind::feature;
  u.source_path = field<std::string>(j, has_audio ? "audio_path" : "feature_path",
                                     path, line);
  return u;
}

inline json utterance_to_json(const Utterance& u) {
  json j;
  j["id"] = u.id;
  j["speaker_id"] = u.speaker_id;
  j["gender"] = std::string(gender_code(u.gender));
  j["sentence_id"] = u.sentence_id;
  j["duration_s"] = u.duration_s;
  j[u.source_kind == SourceKind::audio ? "audio_path" : "feature_path"] =
      u.source_path;
  return j;
}

inline Corpus parse_corpus(std::istream& in, const std::string& name = "<manifest>") {
  std::vector<Utterance> utts;
  std::unordered_map<std::string, std::size_t> first_line;
  detail::for_each_jsonl(in, name, [&](const json& j, std::size_t line) {
    Utterance u = utterance_from_json(j, name, line);
    auto [it, fresh] = first_line.emplace(u.id, line);
    if (!fresh)
      throw ValidationError(detail::line_ctx(name, line) +
                            "duplicate utterance id \"" + u.id +
                            "\" (first seen on line " +
                            std::to_string(it->second) + ")");
    utts.push_back(std::move(u));
  });
  return Corpus(std::move(utts));
}

inline Corpus load_corpus(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw ParseError("cannot open manifest: " + manifest_path);
  return parse_corpus(in, manifest_path);
}

inline void save_manifest(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ParseError("cannot write manifest: " + path);
  for (const Utterance& u : corpus.utterances())
    out << utterance_to_json(u).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Labels

enum class CcrChoice { i_more, i_little_more, j_little_more, j_more };

inline constexpr CcrChoice kAllChoices[] = {
    CcrChoice::i_more, CcrChoice::i_little_more, CcrChoice::j_little_more,
    CcrChoice::j_more};

// Target probability that j exhibits the descriptor more than i.
constexpr double ccr_choice_to_target(CcrChoice c) {
  switch (c) {
    case CcrChoice::i_more: return 0.0;
    case CcrChoice::i_little_more: return 0.25;
    case CcrChoice::j_little_more: return 0.75;
    case CcrChoice::j_more: return 1.0;
  }
  return 0.5;
}

// The same judgement expressed for the swapped pair (j, i).
constexpr CcrChoice mirror(CcrChoice c) {
  switch (c) {
    case CcrChoice::i_more: return CcrChoice::j_more;
    case CcrChoice::i_little_more: return CcrChoice::j_little_more;
    case CcrChoice::j_little_more: return CcrChoice::i_little_more;
    case CcrChoice::j_more: return CcrChoice::i_more;
  }
  return c;
}

constexpr bool is_strong(CcrChoice c) {
  return c == CcrChoice::i_more || c == CcrChoice::j_more;
}

constexpr bool favours_j(CcrChoice c) {
  return c == CcrChoice::j_more || c == CcrChoice::j_little_more;
}

inline std::string_view choice_wire_name(CcrChoice c) {
  switch (c) {
    case CcrChoice::i_more: return "i_more";
    case CcrChoice::i_little_more: return "i_little";
    case CcrChoice::j_little_more: return "j_little";
    case CcrChoice::j_more: return "j_more";
  }
  return "?";
}

inline std::optional<CcrChoice> parse_choice(std::string_view s) {
  for (CcrChoice c : kAllChoices)
    if (choice_wire_name(c) == s) return c;
  return std::nullopt;
}

struct AcrLabel {
  std::string svd_id;
  std::string annotator_id;
  std::string utterance_id;
  int rating = 3;

  bool operator==(const AcrLabel&) const = default;
};

struct CcrLabel {
  std::string svd_id;
  std::string annotator_id;
  std::string utt_i;
  std::string utt_j;
  CcrChoice choice = CcrChoice::i_more;

  bool operator==(const CcrLabel&) const = default;
};

struct LabelSet {
  std::vector<AcrLabel> acr;
  std::vector<CcrLabel> ccr;
};

inline json to_json(const AcrLabel& l) {
  return json{{"svd", l.svd_id}, {"annotator", l.annotator_id},
              {"utt", l.utterance_id}, {"rating", l.rating}};
}

inline json to_json(const CcrLabel& l) {
  return json{{"svd", l.svd_id}, {"annotator", l.annotator_id},
              {"utt_i", l.utt_i}, {"utt_j", l.utt_j},
              {"choice", std::string(choice_wire_name(l.choice))}};
}

inline void validate(const AcrLabel& l, const Corpus& corpus) {
  if (l.rating < 1 || l.rating > 5)
    throw ValidationError("ACR rating " + std::to_string(l.rating) +
                          " outside [1,5]");
  if (!corpus.find(l.utterance_id))
    throw ValidationError("ACR label references unknown utterance \"" +
                          l.utterance_id + "\"");
}

inline void validate(const CcrLabel& l, const Corpus& corpus) {
  if (l.utt_i == l.utt_j)
    throw ValidationError("CCR label compares \"" + l.utt_i + "\" with itself");
  const Utterance* a = corpus.find(l.utt_i);
  const Utterance* b = corpus.find(l.utt_j);
  if (!a || !b)
    throw ValidationError("CCR label references unknown utterance \"" +
                          (a ? l.utt_j : l.utt_i) + "\"");
  if (a->sentence_id != b->sentence_id || a->gender != b->gender)
    throw ValidationError("CCR pair (" + l.utt_i + ", " + l.utt_j +
                          ") must share sentence and gender");
}

// Parses one label record; the record kind is decided by its keys.
inline std::variant<AcrLabel, CcrLabel> label_from_json(
    const json& j, const std::string& path = "<labels>", std::size_t line = 0) {
  using detail::field;
  if (j.contains("rating")) {
    AcrLabel l;
    l.svd_id = field<std::string>(j, "svd", path, line);
    l.annotator_id = field<std::string>(j, "annotator", path, line);
    l.utterance_id = field<std::string>(j, "utt", path, line);
    l.rating = field<int>(j, "rating", path, line);
    return l;
  }
  CcrLabel l;
  l.svd_id = field<std::string>(j, "svd", path, line);
  l.annotator_id = field<std::string>(j, "annotator", path, line);
  l.utt_i = field<std::string>(j, "utt_i", path, line);
  l.utt_j = field<std::string>(j, "utt_j", path, line);
  const auto c = field<std::string>(j, "choice", path, line);
  auto choice = parse_choice(c);
  if (!choice)
    throw ParseError(detail::line_ctx(path, line) + "unknown CCR choice \"" +
                     c + "\"");
  l.choice = *choice;
  return l;
}

// Appends every record of a JSON-lines label file to `out`, validating each
// against the corpus. Labels for unknown utterances are rejected.
inline void parse_labels(std::istream& in, const Corpus& corpus, LabelSet& out,
                         const std::string& name = "<labels>") {
  detail::for_each_jsonl(in, name, [&](const json& j, std::size_t line) {
    auto rec = label_from_json(j, name, line);
    try {
      std::visit([&](const auto& l) { validate(l, corpus); }, rec);
    } catch (const ValidationError& e) {
      throw ValidationError(detail::line_ctx(name, line) + e.what());
    }
    if (auto* a = std::get_if<AcrLabel>(&rec))
      out.acr.push_back(std::move(*a));
    else
      out.ccr.push_back(std::get<CcrLabel>(std::move(rec)));
  });
}

inline void load_labels(const std::string& path, const Corpus& corpus,
                        LabelSet& out) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open label file: " + path);
  parse_labels(in, corpus, out, path);
}

template <class Label>
void save_labels(const std::vector<Label>& labels, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ParseError("cannot write label file: " + path);
  for (const Label& l : labels) out << to_json(l).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Speaker-disjoint splits

// Label indices refer to positions in LabelSet::acr / LabelSet::ccr.
struct SplitPlan {
  std::string svd_id;
  std::set<std::string> train_speakers;
  std::vector<std::size_t> train_acr;
  std::vector<std::size_t> train_ccr;
  std::vector<std::size_t> test_ccr;

  bool operator==(const SplitPlan&) const = default;
};

// Both speakers of a training comparison must be training speakers; a test
// comparison needs at least one held-out speaker.
inline SplitPlan make_split(const Corpus& corpus, const LabelSet& labels,
                            const Svd& svd, std::size_t train_speaker_count,
                            std::uint64_t seed) {
  std::vector<std::string> eligible = corpus.speakers(svd.gender_scope);
  if (train_speaker_count > eligible.size())
    throw ConfigError("requested " + std::to_string(train_speaker_count) +
                      " training speakers but only " +
                      std::to_string(eligible.size()) + " are eligible for " +
                      svd.id);
  Rng rng = make_rng(seed, 0x5);
  std::shuffle(eligible.begin(), eligible.end(), rng);

  SplitPlan plan;
  plan.svd_id = svd.id;
  plan.train_speakers.insert(eligible.begin(),
                             eligible.begin() + static_cast<std::ptrdiff_t>(train_speaker_count));
  auto is_train = [&](const std::string& utt) {
    return plan.train_speakers.count(corpus.at(utt).speaker_id) > 0;
  };
  for (std::size_t k = 0; k < labels.acr.size(); ++k) {
    const AcrLabel& l = labels.acr[k];
    if (l.svd_id == svd.id && is_train(l.utterance_id)) plan.train_acr.push_back(k);
  }
  for (std::size_t k = 0; k < labels.ccr.size(); ++k) {
    const CcrLabel& l = labels.ccr[k];
    if (l.svd_id != svd.id) continue;
    const bool ti = is_train(l.utt_i), tj = is_train(l.utt_j);
    if (ti && tj)
      plan.train_ccr.push_back(k);
    else
      plan.test_ccr.push_back(k);
  }
  return plan;
}

struct Modalities {
  bool acr = true;
  bool ccr = true;
};

namespace detail {
inline std::vector<std::size_t> sample_indices(std::vector<std::size_t> pool,
                                               std::size_t n, Rng& rng,
                                               const char* what) {
  if (n > pool.size())
    throw ConfigError("cannot draw " + std::to_string(n) + " " + what +
                      " training labels from " + std::to_string(pool.size()));
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(n);
  std::sort(pool.begin(), pool.end());
  return pool;
}
}  // namespace detail

// Uniform subset without replacement of exactly n training labels for every
// used modality; unused modalities are cleared. Test labels are untouched.
inline SplitPlan subsample_training(const SplitPlan& plan, std::size_t n,
                                    std::uint64_t seed, Modalities used = {}) {
  SplitPlan out = plan;
  Rng rng = make_rng(seed, 0x7);
  out.train_acr = used.acr ? detail::sample_indices(plan.train_acr, n, rng, "ACR")
                           : std::vector<std::size_t>{};
  out.train_ccr = used.ccr ? detail::sample_indices(plan.train_ccr, n, rng, "CCR")
                           : std::vector<std::size_t>{};
  return out;
}

inline json split_to_json(const SplitPlan& p) {
  return json{{"svd", p.svd_id},
              {"train_speakers", std::vector<std::string>(p.train_speakers.begin(),
                                                          p.train_speakers.end())},
              {"train_acr", p.train_acr},
              {"train_ccr", p.train_ccr},
              {"test_ccr", p.test_ccr}};
}

inline SplitPlan split_from_json(const json& j) {
  try {
    SplitPlan p;
    p.svd_id = j.at("svd").get<std::string>();
    for (const auto& s : j.at("train_speakers")) p.train_speakers.insert(s.get<std::string>());
    p.train_acr = j.at("train_acr").get<std::vector<std::size_t>>();
    p.train_ccr = j.at("train_ccr").get<std::vector<std::size_t>>();
    p.test_ccr = j.at("test_ccr").get<std::vector<std::size_t>>();
    return p;
  } catch (const json::exception& e) {
    throw ParseError(std::string("split file: ") + e.what());
  }
}

inline void save_split(const SplitPlan& p, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ParseError("cannot write split file: " + path);
  out << split_to_json(p).dump(2) << '\n';
}

inline SplitPlan load_split(const std::string& path, const LabelSet& labels) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open split file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  SplitPlan p = split_from_json(j);
  auto check = [&](const std::vector<std::size_t>& idx, std::size_t n, const char* what) {
    for (std::size_t k : idx)
      if (k >= n)
        throw ValidationError(path + ": " + what + " index " + std::to_string(k) +
                              " out of range (" + std::to_string(n) + " labels)");
  };
  check(p.train_acr, labels.acr.size(), "ACR");
  check(p.train_ccr, labels.ccr.size(), "CCR");
  check(p.test_ccr, labels.ccr.size(), "CCR");
  return p;
}

// ---------------------------------------------------------------------------
// Constrained sampling

// Draws an ordered pair uniformly over all unordered same-sentence,
// same-gender pairs within the SVD's gender scope, then orients it by a fair
// coin. Returns utterance ids (i, j).
inline std::pair<std::string, std::string> sample_ccr_pair(const Corpus& corpus,
                                                           const Svd& svd,
                                                           Rng& rng) {
  std::vector<const std::vector<std::size_t>*> groups;
  std::vector<double> weights;
  for (const auto& [key, members] : corpus.pair_groups()) {
    if (!in_scope(svd.gender_scope, key.second) || members.size() < 2) continue;
    const double n = static_cast<double>(members.size());
    groups.push_back(&members);
    weights.push_back(n * (n - 1) / 2);
  }
  if (groups.empty())
    throw ConfigError("no same-sentence, same-gender utterance pair is eligible for " +
                      svd.id);
  std::discrete_distribution<std::size_t> pick_group(weights.begin(), weights.end());
  const auto& members = *groups[pick_group(rng)];
  std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
  std::size_t a = pick(rng);
  std::size_t b = pick(rng);
  while (b == a) b = pick(rng);
  std::bernoulli_distribution flip(0.5);
  if (flip(rng)) std::swap(a, b);
  return {corpus[members[a]].id, corpus[members[b]].id};
}

}  // namespace svdrank
