#pragma once

#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxnlg/tensor.hpp"

namespace ctxnlg {

/// Deterministic generator for a surrogate transit-information corpus in
/// the canonical JSON-lines layout. Groups pair a user context utterance
/// with a DA and three paraphrase references; one reference always echoes
/// the context's phrasing (entrainment), the others draw from neutral
/// wordings, mirroring how context-aware paraphrases behave in real data.
struct SynthSpec {
  int groups = 1859;
  std::uint64_t seed = 13;
};

namespace synthdata {

struct CueSet {
  std::vector<std::string> contexts;
  std::vector<std::string> echoes;
};

struct FamilySpec {
  int weight;
  std::string da_template;
  std::vector<std::string> neutrals;
  std::vector<CueSet> cues;
};

inline const std::vector<std::string>& stops() {
  static const std::vector<std::string> v{
      "Bowling Green", "Cathedral Parkway", "Park Place", "Union Square",
      "Astor Place", "City Hall", "Fulton Street", "Wall Street",
      "South Ferry", "Times Square", "Grand Central", "Penn Station",
      "Columbus Circle", "Herald Square", "Bryant Park", "Canal Street",
      "Houston Street", "Spring Street", "Chambers Street", "Rector Street",
      "Marble Hill", "East Broadway"};
  return v;
}

inline const std::vector<std::string>& lines() {
  static const std::vector<std::string> v{"M15", "M101", "M102", "M103", "M1",
                                          "M2", "M3", "M4", "B42", "B63",
                                          "Q32", "6", "A", "C", "E", "1", "2", "3"};
  return v;
}

inline const std::vector<FamilySpec>& families() {
  static const std::vector<FamilySpec> v = [] {
    std::vector<FamilySpec> f;

    f.push_back(FamilySpec{
        3,
        "iconfirm(alternative=next)",
        {"Next connection.", "The next connection.", "Alright, the next one.",
         "Ok, next one.", "Next departure."},
        {
            {{"is there a later option", "any later option",
              "do you have a later option", "a later option please"},
             {"You want a later option.", "So a later option.",
              "Looking for a later option."}},
            {{"is there a later connection", "can i get a later connection",
              "anything later for this connection"},
             {"You want a later connection.", "So a later connection.",
              "Looking for a later connection."}},
            {{"is there a later trip", "could i take a later trip",
              "what about a later trip"},
             {"You want a later trip.", "So a later trip.",
              "Looking for a later trip."}},
        }});

    f.push_back(FamilySpec{
        2,
        "iconfirm(vehicle=$vehicle)",
        {"By $vehicle.", "Going by $vehicle.", "Alright, $vehicle.",
         "Ok, by $vehicle."},
        {
            {{"i rather take the $vehicle", "i want to take the $vehicle"},
             {"You rather take the $vehicle.", "So you take the $vehicle."}},
            {{"i prefer the $vehicle", "the $vehicle is better for me"},
             {"You prefer the $vehicle.", "So you prefer the $vehicle."}},
            {{"i want to go by $vehicle", "let us go by $vehicle"},
             {"You want to go by $vehicle.", "So you want to go by $vehicle."}},
        }});

    f.push_back(FamilySpec{
        2,
        "iconfirm(departure_time=$time1)",
        {"At $time1.", "Departure at $time1.", "Alright, $time1."},
        {
            {{"is there an option at $time1", "any option at $time1"},
             {"You want an option at $time1.", "An option at $time1, alright."}},
            {{"anything at $time1", "how about $time1"},
             {"Something at $time1, ok.", "You want to go at $time1."}},
            {{"can i leave at $time1", "i want to leave at $time1"},
             {"You want to leave at $time1.", "Leaving at $time1."}},
        }});

    f.push_back(FamilySpec{
        2,
        "inform_no_match(vehicle=$vehicle)",
        {"No $vehicle found, sorry.", "Sorry, no $vehicle found.",
         "I found no $vehicle, sorry."},
        {
            {{"i need to find a $vehicle connection",
              "help me find a $vehicle connection"},
             {"I cannot find a $vehicle connection, sorry.",
              "Sorry, i did not find a $vehicle connection."}},
            {{"is there a $vehicle route for me", "looking for a $vehicle route"},
             {"I did not find a $vehicle route.",
              "Sorry, no $vehicle route found."}},
            {{"is there a $vehicle i can take", "can i take a $vehicle there"},
             {"There is no $vehicle you can take, sorry.",
              "Sorry, no $vehicle to take."}},
        }});

    f.push_back(FamilySpec{
        4,
        "inform(vehicle=$vehicle, departure_time=$time1, direction=$stop1, "
        "from_stop=$stop2, line=$line)",
        {"At $time1 by $vehicle line $line from $stop2 to $stop1.",
         "At $time1 take the $vehicle line $line from $stop2 to $stop1.",
         "Line $line $vehicle leaves $stop2 at $time1 toward $stop1."},
        {
            {{"i rather take the $vehicle", "can i take the $vehicle"},
             {"You can take the $line $vehicle from $stop2 to $stop1 at $time1."}},
            {{"when does it leave", "what time does it go"},
             {"It leaves at $time1, $vehicle line $line from $stop2 to $stop1."}},
            {{"how do i get there", "how can i get there"},
             {"You can get there by $vehicle line $line from $stop2 to $stop1 "
              "at $time1."}},
        }});

    f.push_back(FamilySpec{
        3,
        "inform(vehicle=$vehicle, departure_time=$time1, from_stop=$stop1, "
        "to_stop=$stop2)",
        {"The $vehicle leaves $stop1 at $time1 for $stop2.",
         "At $time1 from $stop1 to $stop2 by $vehicle.",
         "Take the $vehicle at $time1 from $stop1 to $stop2."},
        {
            {{"i want to go to $stop2", "i need to get to $stop2"},
             {"You want to go to $stop2, the $vehicle leaves $stop1 at $time1.",
              "To get to $stop2 take the $vehicle from $stop1 at $time1."}},
            {{"i am leaving from $stop1", "i am at $stop1 now"},
             {"From $stop1 the $vehicle leaves at $time1 to $stop2."}},
            {{"when is the next $vehicle", "next $vehicle please"},
             {"The next $vehicle goes at $time1 from $stop1 to $stop2."}},
        }});

    f.push_back(FamilySpec{
        2,
        "request(from_stop)",
        {"Where are you leaving from?", "Where do you start?",
         "What is your starting stop?"},
        {
            {{"i want to go to $xstop", "i need to get to $xstop"},
             {"Where do you want to go from?",
              "You want to go, but from where?"}},
            {{"i need a connection", "find me a connection"},
             {"A connection from where?", "Where does your connection start?"}},
        }});

    f.push_back(FamilySpec{
        2,
        "request(departure_time)",
        {"When do you want to leave?", "At what time?",
         "What time do you want to leave?"},
        {
            {{"i want to leave from $xstop", "leaving from $xstop"},
             {"You want to leave, at what time?", "When do you want to leave?"}},
            {{"get me to $xstop", "i want to go to $xstop"},
             {"When do you want to go?", "You want to go, at what time?"}},
        }});

    return f;
  }();
  return v;
}

inline std::string substitute(std::string text,
                              const std::map<std::string, std::string>& vars) {
  for (const auto& [key, value] : vars) {
    std::string pat = "$" + key;
    std::size_t at = 0;
    while ((at = text.find(pat, at)) != std::string::npos) {
      text.replace(at, pat.size(), value);
      at += value.size();
    }
  }
  return text;
}

}  // namespace synthdata

inline std::vector<nlohmann::json> synth_corpus_records(const SynthSpec& spec) {
  using namespace synthdata;
  Rng rng(spec.seed);
  const auto& fams = families();
  int total_weight = 0;
  for (const auto& f : fams) total_weight += f.weight;

  std::set<std::pair<std::string, std::string>> seen;
  std::vector<nlohmann::json> records;

  while (static_cast<int>(records.size()) < spec.groups) {
    int w = rng.next_int(total_weight);
    const FamilySpec* fam = &fams.front();
    for (const auto& f : fams) {
      if (w < f.weight) {
        fam = &f;
        break;
      }
      w -= f.weight;
    }

    std::map<std::string, std::string> vars;
    vars["vehicle"] = rng.next_int(2) == 0 ? "bus" : "subway";
    vars["line"] = lines()[rng.next_int(static_cast<int>(lines().size()))];
    int s1 = rng.next_int(static_cast<int>(stops().size()));
    int s2 = (s1 + 1 + rng.next_int(static_cast<int>(stops().size()) - 1)) %
             static_cast<int>(stops().size());
    vars["stop1"] = stops()[s1];
    vars["stop2"] = stops()[s2];
    vars["xstop"] = stops()[rng.next_int(static_cast<int>(stops().size()))];
    int hour = 5 + rng.next_int(12);
    int minute = rng.next_int(60);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%d:%02d%s", hour, minute,
                  rng.next_int(2) == 0 ? "am" : "pm");
    vars["time1"] = buf;

    const CueSet& cue = fam->cues[rng.next_int(static_cast<int>(fam->cues.size()))];
    std::string context = substitute(
        cue.contexts[rng.next_int(static_cast<int>(cue.contexts.size()))], vars);
    std::string da = substitute(fam->da_template, vars);
    if (!seen.emplace(context, da).second) continue;

    auto pick = [&](const std::vector<std::string>& pool) {
      return substitute(pool[rng.next_int(static_cast<int>(pool.size()))], vars);
    };
    std::vector<std::string> refs;
    refs.push_back(pick(fam->neutrals));
    refs.push_back(pick(cue.echoes));
    refs.push_back(rng.next_int(2) == 0 ? pick(fam->neutrals) : pick(cue.echoes));
    rng.shuffle(refs);

    records.push_back({{"context", context}, {"da", da}, {"refs", refs}});
  }
  return records;
}

inline void write_synth_corpus(const std::string& path, const SynthSpec& spec) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("synth: cannot open " + path);
  for (const auto& rec : synth_corpus_records(spec)) out << rec.dump() << "\n";
}

}  // namespace ctxnlg
