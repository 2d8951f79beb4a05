#pragma once
// Human-readable token properties: segment, merged POS tag, lexical overlap,
// and their conjunctions. A PropertySpace fixes the ordered universe of
// properties that features are indexed by.

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "expcal/core_types.hpp"
#include "expcal/error.hpp"

namespace expcal {

struct TagUniverse {
  std::vector<std::string> merged_tags;
  std::map<std::string, std::string> merge_map;  // raw Penn tag -> merged tag

  std::size_t size() const { return merged_tags.size(); }

  std::optional<std::size_t> index_of(std::string_view tag) const {
    auto it = std::find(merged_tags.begin(), merged_tags.end(), tag);
    if (it == merged_tags.end()) return std::nullopt;
    return static_cast<std::size_t>(it - merged_tags.begin());
  }

  void check() const {
    std::set<std::string> seen;
    for (const auto& t : merged_tags) {
      if (t.empty()) throw InvalidArgument("empty tag name in universe");
      if (!seen.insert(t).second) throw InvalidArgument("duplicate tag '" + t + "' in universe");
    }
    for (const auto& [raw, merged] : merge_map) {
      if (!seen.count(merged)) {
        throw InvalidArgument("merge rule " + raw + "->" + merged + " targets a tag outside the universe");
      }
    }
  }

  // Penn Treebank with JJ*, NN/NNS, NNP*, RB*, VB*, and wh-words merged, plus
  // a PUNCT bucket. 25 tags.
  static TagUniverse penn_default() {
    TagUniverse u;
    u.merged_tags = {"CC", "CD",  "DT", "EX",  "FW",  "IN",  "JJ", "LS", "MD",    "NN",    "NNP",   "PDT", "POS",
                     "PRP", "PRP$", "RB", "RP", "SYM", "TO", "UH", "VB", "W", "PUNCT", "-LRB-", "-RRB-"};
    auto merge = [&](std::initializer_list<const char*> raws, const char* into) {
      for (const char* r : raws) u.merge_map[r] = into;
    };
    merge({"JJ", "JJR", "JJS"}, "JJ");
    merge({"NN", "NNS"}, "NN");
    merge({"NNP", "NNPS"}, "NNP");
    merge({"RB", "RBR", "RBS"}, "RB");
    merge({"VB", "VBD", "VBG", "VBN", "VBP", "VBZ"}, "VB");
    merge({"WDT", "WP", "WP$", "WRB"}, "W");
    merge({".", ",", ":", "``", "''", "HYPH", "NFP"}, "PUNCT");
    merge({"$", "#"}, "SYM");
    return u;
  }

  // One merged tag per line, or "RAW->MERGED" merge rules. Lines starting
  // with "# " are comments; blank lines are ignored.
  static TagUniverse parse(std::istream& in) {
    TagUniverse u;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      const auto last = line.find_last_not_of(" \t\r");
      line = line.substr(first, last - first + 1);
      if (line.rfind("# ", 0) == 0) continue;
      const auto arrow = line.find("->");
      if (arrow == std::string::npos) {
        u.merged_tags.push_back(line);
      } else {
        const std::string raw = line.substr(0, arrow);
        const std::string merged = line.substr(arrow + 2);
        if (raw.empty() || merged.empty()) throw FormatError("malformed merge rule '" + line + "'", lineno);
        u.merge_map[raw] = merged;
      }
    }
    try {
      u.check();
    } catch (const InvalidArgument& e) {
      throw FormatError(e.what());
    }
    return u;
  }

  static TagUniverse load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open tag universe file '" + path + "'");
    return parse(in);
  }
};

// Applies merge rules; tags already in the universe pass through. nullopt
// means Unknown.
inline std::optional<std::string> merge_tag(std::string_view raw, const TagUniverse& universe) {
  auto it = universe.merge_map.find(std::string(raw));
  if (it != universe.merge_map.end()) return it->second;
  if (universe.index_of(raw)) return std::string(raw);
  return std::nullopt;
}

enum class Overlap { Overlapping, NonOverlapping };

inline std::string_view to_string(Overlap o) {
  return o == Overlap::Overlapping ? "overlap" : "nonoverlap";
}

// NLI only: a token overlaps iff its lowercased text occurs in both the premise
// and the hypothesis.
inline std::vector<Overlap> overlap_flags(const AnnotatedInstance& inst) {
  if (inst.task != Task::NLI) throw InvalidArgument("overlap flags are defined for NLI instances only");
  std::set<std::string> premise, hypothesis;
  for (const auto& t : inst.tokens) {
    if (t.segment == Segment::Premise) premise.insert(eval::lowercase(t.text));
    if (t.segment == Segment::Hypothesis) hypothesis.insert(eval::lowercase(t.text));
  }
  std::vector<Overlap> out;
  out.reserve(inst.tokens.size());
  for (const auto& t : inst.tokens) {
    const auto key = eval::lowercase(t.text);
    out.push_back(premise.count(key) && hypothesis.count(key) ? Overlap::Overlapping : Overlap::NonOverlapping);
  }
  return out;
}

enum class PropertyGroup { Segment, SegmentTag, SegmentTagOverlap };

struct PropertyScheme {
  Task task = Task::QA;
  std::vector<PropertyGroup> groups;
  TagUniverse universe;

  bool needs_tags() const {
    return std::any_of(groups.begin(), groups.end(), [](PropertyGroup g) { return g != PropertyGroup::Segment; });
  }

  static PropertyScheme for_task(Task task, TagUniverse universe = TagUniverse::penn_default()) {
    PropertyScheme s;
    s.task = task;
    s.groups = task == Task::QA
                   ? std::vector<PropertyGroup>{PropertyGroup::Segment, PropertyGroup::SegmentTag}
                   : std::vector<PropertyGroup>{PropertyGroup::Segment, PropertyGroup::SegmentTagOverlap};
    s.universe = std::move(universe);
    return s;
  }
};

inline std::string property_name(Segment seg) { return std::string(to_string(seg)); }
inline std::string property_name(Segment seg, std::string_view tag) {
  return std::string(to_string(seg)) + "*" + std::string(tag);
}
inline std::string property_name(Segment seg, std::string_view tag, Overlap o) {
  return property_name(seg, tag) + "*" + std::string(to_string(o));
}

// Ordered property universe for a scheme with O(1) name lookup.
class PropertySpace {
 public:
  explicit PropertySpace(PropertyScheme scheme) : scheme_(std::move(scheme)) {
    const auto segs = task_segments(scheme_.task);
    const auto& tags = scheme_.universe.merged_tags;
    for (PropertyGroup g : scheme_.groups) {
      for (Segment seg : segs) {
        switch (g) {
          case PropertyGroup::Segment:
            add(property_name(seg));
            break;
          case PropertyGroup::SegmentTag:
            for (const auto& t : tags) add(property_name(seg, t));
            break;
          case PropertyGroup::SegmentTagOverlap:
            for (const auto& t : tags) {
              for (Overlap o : {Overlap::Overlapping, Overlap::NonOverlapping}) add(property_name(seg, t, o));
            }
            break;
        }
      }
    }
  }

  const PropertyScheme& scheme() const { return scheme_; }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }

  std::optional<std::size_t> index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

 private:
  void add(std::string name) {
    if (!index_.emplace(name, names_.size()).second) throw InvalidArgument("duplicate property " + name);
    names_.push_back(std::move(name));
  }

  PropertyScheme scheme_;
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline std::vector<std::string> property_space(const PropertyScheme& scheme) {
  return PropertySpace(scheme).names();
}

// Per token: indices into the PropertySpace, ascending.
struct TokenProperties {
  std::vector<std::vector<std::size_t>> per_token;

  std::size_t size() const { return per_token.size(); }
};

inline TokenProperties annotate(const AnnotatedInstance& inst, const PropertySpace& space) {
  const PropertyScheme& scheme = space.scheme();
  if (inst.task != scheme.task) throw InvalidArgument("instance task does not match property scheme");

  if (scheme.needs_tags()) {
    std::string missing;
    for (std::size_t i = 0; i < inst.tokens.size(); ++i) {
      if (!inst.tokens[i].raw_tag) missing += (missing.empty() ? "" : ",") + std::to_string(i);
    }
    if (!missing.empty()) throw InvalidArgument("tokens missing POS tags at indices " + missing);
  }

  const bool wants_overlap = std::find(scheme.groups.begin(), scheme.groups.end(),
                                       PropertyGroup::SegmentTagOverlap) != scheme.groups.end();
  std::vector<Overlap> overlap;
  if (wants_overlap) overlap = overlap_flags(inst);

  auto lookup = [&](const std::string& name) {
    auto idx = space.index_of(name);
    if (!idx) throw InvalidArgument("property " + name + " is outside the property space");
    return *idx;
  };

  TokenProperties out;
  out.per_token.resize(inst.tokens.size());
  for (std::size_t i = 0; i < inst.tokens.size(); ++i) {
    const Token& tok = inst.tokens[i];
    std::optional<std::string> tag;
    if (tok.raw_tag) tag = merge_tag(*tok.raw_tag, scheme.universe);
    auto& props = out.per_token[i];
    for (PropertyGroup g : scheme.groups) {
      switch (g) {
        case PropertyGroup::Segment:
          props.push_back(lookup(property_name(tok.segment)));
          break;
        case PropertyGroup::SegmentTag:
          if (tag) props.push_back(lookup(property_name(tok.segment, *tag)));
          break;
        case PropertyGroup::SegmentTagOverlap:
          if (tag) props.push_back(lookup(property_name(tok.segment, *tag, overlap[i])));
          break;
      }
    }
    std::sort(props.begin(), props.end());
  }
  return out;
}

}  // namespace expcal
