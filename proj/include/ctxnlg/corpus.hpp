#pragma once

#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ctxnlg/delex.hpp"
#include "ctxnlg/dialogue_act.hpp"
#include "ctxnlg/tensor.hpp"

namespace ctxnlg {

/// One DA+context group: up to three paraphrase references that act as
/// separate training instances but as a joint reference set at evaluation.
struct Instance {
  int group_id = -1;
  std::string context_raw;
  std::string da_raw;
  std::vector<std::string> refs_raw;

  std::vector<std::string> context;                 // delexicalized tokens
  DialogueAct da;                                   // delexicalized
  std::vector<std::vector<std::string>> references; // delexicalized tokens
  std::map<std::string, std::string> delex_map;
  int unmatched_values = 0;
};

/// Canonical JSON-lines corpus: one {"context", "da", "refs"} object per
/// group. Delexicalization is applied on load; the context shares the DA's
/// placeholder assignment.
inline std::vector<Instance> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_corpus: cannot open " + path);
  std::vector<Instance> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& msg) -> std::runtime_error {
      return std::runtime_error(path + ":" + std::to_string(line_no) + ": " + msg);
    };
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw fail(std::string("bad JSON: ") + e.what());
    }
    if (!rec.contains("context") || !rec["context"].is_string())
      throw fail("missing or non-string 'context' field");
    if (!rec.contains("da") || !rec["da"].is_string())
      throw fail("missing or non-string 'da' field");
    if (!rec.contains("refs") || !rec["refs"].is_array() || rec["refs"].empty() ||
        rec["refs"].size() > 3)
      throw fail("'refs' must hold 1 to 3 strings");

    Instance inst;
    inst.group_id = static_cast<int>(out.size());
    inst.context_raw = rec["context"].get<std::string>();
    inst.da_raw = rec["da"].get<std::string>();
    for (const auto& r : rec["refs"]) {
      if (!r.is_string()) throw fail("'refs' must hold strings");
      inst.refs_raw.push_back(r.get<std::string>());
    }

    DialogueAct da;
    try {
      da = parse_da(inst.da_raw);
    } catch (const DaParseError& e) {
      throw fail(std::string("bad DA: ") + e.what());
    }
    for (const std::string& ref : inst.refs_raw) {
      DelexResult d = delexicalize(tokenize(ref), da);
      inst.references.push_back(std::move(d.tokens));
      inst.unmatched_values += d.unmatched;
      inst.da = d.da;
      for (auto& [k, v] : d.map) inst.delex_map[k] = v;
    }
    inst.context = delexicalize(tokenize(inst.context_raw), da).tokens;
    out.push_back(std::move(inst));
  }
  return out;
}

struct SplitManifest {
  std::uint64_t seed = 0;
  std::vector<int> train, dev, test;

  nlohmann::json to_json() const {
    return {{"seed", seed}, {"train", train}, {"dev", dev}, {"test", test}};
  }
  static SplitManifest from_json(const nlohmann::json& j) {
    SplitManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.train = j.at("train").get<std::vector<int>>();
    m.dev = j.at("dev").get<std::vector<int>>();
    m.test = j.at("test").get<std::vector<int>>();
    return m;
  }
  void save(const std::string& path) const {
    std::ofstream out(path);
    out << to_json().dump(2) << "\n";
  }
  static SplitManifest load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("manifest: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }
};

struct SplitSections {
  std::vector<Instance> train, dev, test;
  SplitManifest manifest;
};

/// Deterministic 3:1:1 split by group; a group's paraphrases never straddle
/// sections.
inline SplitSections split_corpus(const std::vector<Instance>& instances,
                                  std::uint64_t seed) {
  const std::size_t n = instances.size();
  std::size_t n_train = static_cast<std::size_t>(std::llround(0.6 * static_cast<double>(n)));
  std::size_t n_dev = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n)));
  if (n_train == 0 || n_dev == 0 || n_train + n_dev >= n)
    throw std::runtime_error("split_corpus: fewer groups than sections (" +
                             std::to_string(n) + " groups)");

  std::vector<int> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<int>(i);
  Rng rng(seed);
  rng.shuffle(ids);

  SplitSections s;
  s.manifest.seed = seed;
  for (std::size_t i = 0; i < n; ++i) {
    const Instance& inst = instances[ids[i]];
    if (i < n_train) {
      s.manifest.train.push_back(inst.group_id);
      s.train.push_back(inst);
    } else if (i < n_train + n_dev) {
      s.manifest.dev.push_back(inst.group_id);
      s.dev.push_back(inst);
    } else {
      s.manifest.test.push_back(inst.group_id);
      s.test.push_back(inst);
    }
  }
  return s;
}

/// Rebuilds sections from a saved manifest (exact reproducibility).
inline SplitSections apply_manifest(const std::vector<Instance>& instances,
                                    const SplitManifest& manifest) {
  std::unordered_map<int, const Instance*> by_id;
  for (const Instance& inst : instances) by_id[inst.group_id] = &inst;
  auto take = [&](const std::vector<int>& ids) {
    std::vector<Instance> out;
    for (int id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end())
        throw std::runtime_error("manifest references unknown group " +
                                 std::to_string(id));
      out.push_back(*it->second);
    }
    return out;
  };
  SplitSections s;
  s.manifest = manifest;
  s.train = take(manifest.train);
  s.dev = take(manifest.dev);
  s.test = take(manifest.test);
  return s;
}

struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kGo = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  std::vector<std::string> id_to_token{"<pad>", "<go>", "<eos>", "<unk>"};
  std::unordered_map<std::string, int> token_to_id;

  int size() const { return static_cast<int>(id_to_token.size()); }

  int add(const std::string& tok) {
    auto [it, fresh] = token_to_id.emplace(tok, size());
    if (fresh) id_to_token.push_back(tok);
    return it->second;
  }

  int encode(const std::string& tok) const {
    auto it = token_to_id.find(tok);
    return it == token_to_id.end() ? kUnk : it->second;
  }

  std::vector<int> encode_all(const std::vector<std::string>& toks) const {
    std::vector<int> out;
    out.reserve(toks.size());
    for (const auto& t : toks) out.push_back(encode(t));
    return out;
  }

  const std::string& decode(int id) const { return id_to_token.at(id); }

  std::vector<std::string> decode_all(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(decode(id));
    return out;
  }

  nlohmann::json to_json() const { return id_to_token; }
  static Vocabulary from_json(const nlohmann::json& j) {
    Vocabulary v;
    v.id_to_token = j.get<std::vector<std::string>>();
    v.token_to_id.clear();
    for (int i = 4; i < v.size(); ++i) v.token_to_id[v.id_to_token[i]] = i;
    return v;
  }
};

enum class VocabKind { kDa, kContext, kOutput };

/// Builds a dictionary from the training section only; tokens below
/// min_count fall back to UNK at encode time.
inline Vocabulary build_vocab(const std::vector<Instance>& train,
                              VocabKind kind, int min_count = 1) {
  std::vector<std::string> stream;
  for (const Instance& inst : train) {
    switch (kind) {
      case VocabKind::kDa: {
        auto triples = da_to_triples(inst.da);
        stream.insert(stream.end(), triples.begin(), triples.end());
        break;
      }
      case VocabKind::kContext:
        stream.insert(stream.end(), inst.context.begin(), inst.context.end());
        break;
      case VocabKind::kOutput:
        for (const auto& ref : inst.references)
          stream.insert(stream.end(), ref.begin(), ref.end());
        break;
    }
  }
  std::unordered_map<std::string, int> counts;
  for (const auto& t : stream) counts[t]++;
  Vocabulary v;
  for (const auto& t : stream)
    if (counts[t] >= min_count) v.add(t);
  return v;
}

}  // namespace ctxnlg
