#pragma once

#include <array>
#include <cctype>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ctxnlg {

/// One act item: type plus optional slot and value. Empty string means the
/// part is absent; a value implies a slot.
struct DaItem {
  std::string da_type;
  std::string slot;
  std::string value;

  bool operator==(const DaItem&) const = default;
};

struct DialogueAct {
  std::vector<DaItem> items;

  bool operator==(const DialogueAct&) const = default;
};

inline const std::array<std::string_view, 4> kDaTypes = {
    "iconfirm", "inform", "inform_no_match", "request"};

inline bool is_known_da_type(std::string_view t) {
  for (auto k : kDaTypes)
    if (k == t) return true;
  return false;
}

class DaParseError : public std::runtime_error {
 public:
  DaParseError(std::size_t offset, const std::string& msg)
      : std::runtime_error("parse error at offset " + std::to_string(offset) +
                           ": " + msg),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Parses `type(slot=value, ...)` with `&`-joined acts into a flat item
/// list. Values may contain spaces and colons; double quotes protect commas.
inline DialogueAct parse_da(std::string_view text) {
  DialogueAct da;
  std::size_t i = 0;
  auto skip_ws = [&] {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
  };
  auto ident = [&]() -> std::string {
    std::size_t start = i;
    while (i < text.size() &&
           (std::isalnum(static_cast<unsigned char>(text[i])) || text[i] == '_'))
      ++i;
    return std::string(text.substr(start, i - start));
  };

  while (true) {
    skip_ws();
    std::size_t type_at = i;
    std::string type = ident();
    if (type.empty()) throw DaParseError(i, "expected a DA type");
    if (!is_known_da_type(type))
      throw DaParseError(type_at, "unknown da_type '" + type + "'");
    skip_ws();
    if (i >= text.size() || text[i] != '(')
      throw DaParseError(i, "expected '(' after DA type");
    ++i;
    skip_ws();
    if (i < text.size() && text[i] == ')') {
      da.items.push_back({type, "", ""});
      ++i;
    } else {
      while (true) {
        skip_ws();
        if (i >= text.size()) throw DaParseError(i, "expected a slot or ')'");
        std::size_t slot_at = i;
        std::string slot = ident();
        if (slot.empty()) throw DaParseError(slot_at, "empty slot name");
        skip_ws();
        std::string value;
        if (i < text.size() && text[i] == '=') {
          ++i;
          skip_ws();
          if (i < text.size() && text[i] == '"') {
            ++i;
            std::size_t start = i;
            while (i < text.size() && text[i] != '"') ++i;
            if (i >= text.size()) throw DaParseError(i, "unterminated quote");
            value = std::string(text.substr(start, i - start));
            ++i;
          } else {
            std::size_t start = i;
            while (i < text.size() && text[i] != ',' && text[i] != ')') ++i;
            std::size_t end = i;
            while (end > start &&
                   std::isspace(static_cast<unsigned char>(text[end - 1])))
              --end;
            value = std::string(text.substr(start, end - start));
            if (value.empty()) throw DaParseError(start, "empty value after '='");
          }
        }
        da.items.push_back({type, slot, value});
        skip_ws();
        if (i >= text.size()) throw DaParseError(i, "expected ',' or ')'");
        if (text[i] == ',') {
          ++i;
          continue;
        }
        if (text[i] == ')') {
          ++i;
          break;
        }
        throw DaParseError(i, "expected ',' or ')'");
      }
    }
    skip_ws();
    if (i >= text.size()) break;
    if (text[i] != '&') throw DaParseError(i, "expected '&' between acts");
    ++i;
  }
  if (da.items.empty()) throw DaParseError(0, "empty dialogue act");
  return da;
}

/// Inverse of parse_da; consecutive slotted items of one type share an act.
inline std::string serialize_da(const DialogueAct& da) {
  std::string out;
  std::size_t i = 0;
  while (i < da.items.size()) {
    const std::string& type = da.items[i].da_type;
    if (!out.empty()) out += '&';
    out += type;
    out += '(';
    if (da.items[i].slot.empty()) {
      ++i;
    } else {
      bool first = true;
      while (i < da.items.size() && da.items[i].da_type == type &&
             !da.items[i].slot.empty()) {
        if (!first) out += ", ";
        first = false;
        out += da.items[i].slot;
        if (!da.items[i].value.empty()) {
          out += '=';
          out += da.items[i].value;
        }
        ++i;
      }
    }
    out += ')';
  }
  return out;
}

inline const std::string kNoSlotToken = "<noslot>";
inline const std::string kNoValueToken = "<novalue>";

/// Flattens a DA into encoder tokens, three per item.
inline std::vector<std::string> da_to_triples(const DialogueAct& da) {
  std::vector<std::string> out;
  out.reserve(da.items.size() * 3);
  for (const DaItem& item : da.items) {
    out.push_back(item.da_type);
    out.push_back(item.slot.empty() ? kNoSlotToken : item.slot);
    out.push_back(item.value.empty() ? kNoValueToken : item.value);
  }
  return out;
}

}  // namespace ctxnlg
