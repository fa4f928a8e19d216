#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ctxnlg/dialogue_act.hpp"

namespace ctxnlg {

inline bool is_placeholder(std::string_view tok) {
  if (tok.size() < 3 || tok.front() != '*' || tok.back() != '*') return false;
  bool saw_alpha = false;
  for (std::size_t i = 1; i + 1 < tok.size(); ++i) {
    char c = tok[i];
    if (std::isalpha(static_cast<unsigned char>(c)))
      saw_alpha = true;
    else if (!std::isdigit(static_cast<unsigned char>(c)) && c != '_')
      return false;
  }
  return saw_alpha;
}

/// Lowercasing tokenizer that splits punctuation into separate tokens.
/// Colons stay inside times ("8:01am"), apostrophes stay inside words, and
/// placeholder tokens keep their uppercase form.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) return;
    if (is_placeholder(cur)) {
      for (char& c : cur) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    } else {
      for (char& c : cur) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    out.push_back(cur);
    cur.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else if (c == ':' && i > 0 && i + 1 < text.size() &&
               std::isdigit(static_cast<unsigned char>(text[i - 1])) &&
               std::isdigit(static_cast<unsigned char>(text[i + 1]))) {
      cur += c;  // clock time
    } else if (std::string_view(",.!?;:()\"").find(c) != std::string_view::npos) {
      flush();
      out.emplace_back(1, c);
    } else {
      cur += c;
    }
  }
  flush();
  return out;
}

/// Joins tokens with simple spacing: no space before closing punctuation,
/// none after an opening parenthesis.
inline std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  for (const std::string& tok : tokens) {
    bool no_space = out.empty() ||
                    (tok.size() == 1 &&
                     std::string_view(",.!?;:)").find(tok[0]) != std::string_view::npos) ||
                    out.back() == '(';
    if (!no_space) out += ' ';
    out += tok;
  }
  return out;
}

/// Slots whose values are replaced by placeholders; base marker per slot.
/// `vehicle` and `alternative` stay lexical.
inline std::optional<std::string> placeholder_base(std::string_view slot) {
  if (slot == "from_stop" || slot == "to_stop" || slot == "direction")
    return "STOP";
  if (slot == "departure_time" || slot == "arrival_time" || slot == "time")
    return "TIME";
  if (slot == "line") return "LINE";
  if (slot == "ampm") return "AMPM";
  return std::nullopt;
}

struct DelexResult {
  std::vector<std::string> tokens;
  std::map<std::string, std::string> map;  // placeholder -> original surface
  DialogueAct da;                          // values replaced by placeholders
  int unmatched = 0;  // DA values never found in the utterance
};

/// Replaces slot values from the DA by placeholder tokens in the utterance
/// and in the DA itself. Distinct values sharing a base marker get 1-based
/// indices in DA item order; a lone value keeps the bare marker.
inline DelexResult delexicalize(const std::vector<std::string>& utterance,
                                const DialogueAct& da) {
  struct Assignment {
    std::string placeholder;
    std::string base;
    std::vector<std::string> value_tokens;
    bool matched = false;
  };

  // Collect distinct (base, value) pairs in item order.
  struct Pending {
    std::string base;
    std::string raw;
    std::vector<std::string> toks;
  };
  std::vector<Pending> pending;
  for (const DaItem& item : da.items) {
    if (item.value.empty() || is_placeholder(item.value)) continue;
    auto base = placeholder_base(item.slot);
    if (!base) continue;
    std::vector<std::string> toks = tokenize(item.value);
    bool seen = false;
    for (const Pending& p : pending)
      if (p.base == *base && p.toks == toks) seen = true;
    if (!seen) pending.push_back({*base, item.value, std::move(toks)});
  }

  std::map<std::string, int> per_base;
  for (const Pending& p : pending) per_base[p.base]++;
  std::map<std::string, int> counter;
  DelexResult res;
  std::vector<Assignment> assigns;
  for (const Pending& p : pending) {
    std::string name = "*" + p.base;
    if (per_base[p.base] > 1) name += std::to_string(++counter[p.base]);
    name += "*";
    res.map[name] = p.raw;
    assigns.push_back({name, p.base, p.toks, false});
  }

  // Rewrite the DA.
  res.da = da;
  for (DaItem& item : res.da.items) {
    if (item.value.empty() || is_placeholder(item.value)) continue;
    if (!placeholder_base(item.slot)) continue;
    std::vector<std::string> toks = tokenize(item.value);
    for (const Assignment& a : assigns)
      if (a.value_tokens == toks && a.base == *placeholder_base(item.slot)) {
        item.value = a.placeholder;
        break;
      }
  }

  // Longest match first so "cathedral parkway" wins over "cathedral".
  std::vector<int> order(assigns.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return assigns[a].value_tokens.size() > assigns[b].value_tokens.size();
  });

  std::size_t pos = 0;
  while (pos < utterance.size()) {
    bool replaced = false;
    for (int idx : order) {
      Assignment& a = assigns[idx];
      const auto& vt = a.value_tokens;
      if (vt.empty() || pos + vt.size() > utterance.size()) continue;
      bool match = true;
      for (std::size_t j = 0; j < vt.size(); ++j)
        if (utterance[pos + j] != vt[j]) {
          match = false;
          break;
        }
      if (match) {
        res.tokens.push_back(a.placeholder);
        pos += vt.size();
        a.matched = true;
        replaced = true;
        break;
      }
    }
    if (!replaced) res.tokens.push_back(utterance[pos++]);
  }

  for (const Assignment& a : assigns)
    if (!a.matched) res.unmatched++;
  return res;
}

/// Substitutes placeholders back and detokenizes.
inline std::string lexicalize(const std::vector<std::string>& tokens,
                              const std::map<std::string, std::string>& map) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const std::string& tok : tokens) {
    if (is_placeholder(tok)) {
      auto it = map.find(tok);
      if (it == map.end())
        throw std::runtime_error("lexicalize: unmapped placeholder " + tok);
      out.push_back(it->second);
    } else {
      out.push_back(tok);
    }
  }
  return detokenize(out);
}

}  // namespace ctxnlg
