#include "sct/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "sct/error.hpp"

namespace sct {

namespace {

std::string escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string unescape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      ++i;
      switch (s[i]) {
        case 't': out.push_back('\t'); break;
        case 'n': out.push_back('\n'); break;
        case 'r': out.push_back('\r'); break;
        default: out.push_back(s[i]);
      }
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

}  // namespace

uint64_t fnv1a64(const void* data, size_t len, uint64_t seed) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

const std::vector<std::string>& Vocabulary::subtoken_specials() {
  static const std::vector<std::string> kSpecials = {
      "[PAD]",    "[UNK]",    "[MASK_STRING]",      "[MASK_NUMBER]",
      "[INDENT]", "[DEDENT]", "[METHOD_NAME_MASK]", "[EON]"};
  return kSpecials;
}

const std::vector<std::string>& Vocabulary::node_type_specials() {
  static const std::vector<std::string> kSpecials = {"[UNK]"};
  return kSpecials;
}

Vocabulary::Vocabulary(std::vector<std::string> specials, long min_count)
    : specials_(std::move(specials)), min_count_(min_count) {}

void Vocabulary::count(const std::string& subtoken, long c) {
  if (finalized_) throw DataError("vocabulary already finalized");
  counts_[subtoken] += c;
}

void Vocabulary::finalize() {
  if (finalized_) return;
  names_.clear();
  entry_counts_.clear();
  ids_.clear();
  for (const auto& s : specials_) {
    ids_[s] = static_cast<int>(names_.size());
    names_.push_back(s);
    entry_counts_.push_back(0);
  }
  std::vector<std::pair<std::string, long>> entries;
  entries.reserve(counts_.size());
  for (const auto& [name, c] : counts_) {
    if (c >= min_count_ && !ids_.count(name)) entries.emplace_back(name, c);
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (auto& [name, c] : entries) {
    ids_[name] = static_cast<int>(names_.size());
    names_.push_back(name);
    entry_counts_.push_back(c);
  }
  auto it = ids_.find("[UNK]");
  unk_id_ = it == ids_.end() ? -1 : it->second;
  finalized_ = true;
}

Vocabulary Vocabulary::union_of(const std::vector<Vocabulary>& vocabs) {
  if (vocabs.empty()) throw DataError("union of zero vocabularies");
  Vocabulary out(vocabs.front().specials_, vocabs.front().min_count_);
  for (const auto& v : vocabs) {
    if (!v.finalized_) throw DataError("union over unfinalized vocabulary");
    for (int i = v.n_specials(); i < v.size(); ++i) {
      out.counts_[v.names_[i]] += v.entry_counts_[i];
    }
  }
  // Membership already filtered per language; keep everything.
  out.min_count_ = 1;
  out.finalize();
  out.min_count_ = vocabs.front().min_count_;
  return out;
}

int Vocabulary::id(const std::string& subtoken) const {
  auto it = ids_.find(subtoken);
  if (it != ids_.end()) return it->second;
  if (unk_id_ < 0) throw DataError("vocabulary has no [UNK] entry");
  return unk_id_;
}

bool Vocabulary::contains(const std::string& subtoken) const {
  return ids_.count(subtoken) > 0;
}

const std::string& Vocabulary::name(int id) const {
  if (id < 0 || id >= size()) throw DataError("vocabulary id out of range");
  return names_[id];
}

std::string Vocabulary::serialize() const {
  std::ostringstream os;
  os << "sct-vocab 1\n";
  os << "min_count " << min_count_ << "\n";
  os << "specials";
  for (const auto& s : specials_) os << ' ' << s;
  os << "\n";
  for (int i = n_specials(); i < size(); ++i) {
    os << escape(names_[i]) << '\t' << entry_counts_[i] << '\n';
  }
  return os.str();
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write vocabulary: " + path);
  const std::string body = serialize();
  f.write(body.data(), static_cast<std::streamsize>(body.size()));
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read vocabulary: " + path);
  std::string line;
  if (!std::getline(f, line) || line != "sct-vocab 1") {
    throw DataError("bad vocabulary header in " + path);
  }
  long min_count = 1;
  if (!std::getline(f, line) || line.rfind("min_count ", 0) != 0) {
    throw DataError("missing min_count in " + path);
  }
  min_count = std::stol(line.substr(10));
  if (!std::getline(f, line) || line.rfind("specials", 0) != 0) {
    throw DataError("missing specials in " + path);
  }
  std::vector<std::string> specials;
  {
    std::istringstream ss(line.substr(8));
    std::string s;
    while (ss >> s) specials.push_back(s);
  }
  Vocabulary v(specials, min_count);
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const size_t tab = line.rfind('\t');
    if (tab == std::string::npos) throw DataError("bad vocab line: " + line);
    v.counts_[unescape(line.substr(0, tab))] = std::stol(line.substr(tab + 1));
  }
  const long mc = v.min_count_;
  v.min_count_ = 1;  // entries in the file already passed the threshold
  v.finalize();
  v.min_count_ = mc;
  return v;
}

uint64_t Vocabulary::hash() const {
  const std::string body = serialize();
  return fnv1a64(body.data(), body.size());
}

}  // namespace sct
