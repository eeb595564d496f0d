#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "mtqsar/bitvec.hpp"
#include "mtqsar/errors.hpp"
#include "mtqsar/rng.hpp"

namespace mtqsar::chem {

// Bond orders; kAromatic participates in valence sums as 1.5.
enum BondOrder : int { kSingle = 1, kDouble = 2, kTriple = 3, kAromatic = 4 };

struct Atom {
  int atomic_number = 0;
  int formal_charge = 0;
  int explicit_h = 0;  // hydrogens stated in a bracket atom
  int implicit_h = 0;  // computed from valence rules
  bool aromatic = false;
  bool from_bracket = false;
  bool in_ring = false;
  std::size_t offset = 0;  // byte position in the source string

  int total_h() const { return explicit_h + implicit_h; }
};

struct Bond {
  int a = 0;
  int b = 0;
  BondOrder order = kSingle;
  bool in_ring = false;
};

struct Molecule {
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;

  std::vector<std::vector<int>> adjacency() const {
    std::vector<std::vector<int>> adj(atoms.size());
    for (std::size_t i = 0; i < bonds.size(); ++i) {
      adj[std::size_t(bonds[i].a)].push_back(int(i));
      adj[std::size_t(bonds[i].b)].push_back(int(i));
    }
    return adj;
  }
};

namespace detail {

inline const std::map<std::string, int, std::less<>>& element_table() {
  static const std::map<std::string, int, std::less<>> table = {
      {"H", 1},    {"He", 2},   {"Li", 3},   {"Be", 4},   {"B", 5},
      {"C", 6},    {"N", 7},    {"O", 8},    {"F", 9},    {"Ne", 10},
      {"Na", 11},  {"Mg", 12},  {"Al", 13},  {"Si", 14},  {"P", 15},
      {"S", 16},   {"Cl", 17},  {"Ar", 18},  {"K", 19},   {"Ca", 20},
      {"Sc", 21},  {"Ti", 22},  {"V", 23},   {"Cr", 24},  {"Mn", 25},
      {"Fe", 26},  {"Co", 27},  {"Ni", 28},  {"Cu", 29},  {"Zn", 30},
      {"Ga", 31},  {"Ge", 32},  {"As", 33},  {"Se", 34},  {"Br", 35},
      {"Kr", 36},  {"Rb", 37},  {"Sr", 38},  {"Y", 39},   {"Zr", 40},
      {"Nb", 41},  {"Mo", 42},  {"Tc", 43},  {"Ru", 44},  {"Rh", 45},
      {"Pd", 46},  {"Ag", 47},  {"Cd", 48},  {"In", 49},  {"Sn", 50},
      {"Sb", 51},  {"Te", 52},  {"I", 53},   {"Xe", 54},  {"Cs", 55},
      {"Ba", 56},  {"La", 57},  {"Ce", 58},  {"Pr", 59},  {"Nd", 60},
      {"Pm", 61},  {"Sm", 62},  {"Eu", 63},  {"Gd", 64},  {"Tb", 65},
      {"Dy", 66},  {"Ho", 67},  {"Er", 68},  {"Tm", 69},  {"Yb", 70},
      {"Lu", 71},  {"Hf", 72},  {"Ta", 73},  {"W", 74},   {"Re", 75},
      {"Os", 76},  {"Ir", 77},  {"Pt", 78},  {"Au", 79},  {"Hg", 80},
      {"Tl", 81},  {"Pb", 82},  {"Bi", 83},  {"Po", 84},  {"At", 85},
      {"Rn", 86},  {"Fr", 87},  {"Ra", 88},  {"Ac", 89},  {"Th", 90},
      {"Pa", 91},  {"U", 92},   {"Np", 93},  {"Pu", 94},  {"Am", 95},
      {"Cm", 96},  {"Bk", 97},  {"Cf", 98},  {"Es", 99},  {"Fm", 100},
      {"Md", 101}, {"No", 102}, {"Lr", 103}};
  return table;
}

// Standard valences for the organic subset; implicit hydrogens fill the
// smallest one that accommodates the bond sum.
inline const std::vector<int>* organic_valences(int z) {
  static const std::vector<int> kB = {3}, kC = {4}, kN = {3, 5}, kO = {2},
                                kP = {3, 5}, kS = {2, 4, 6}, kHalogen = {1};
  switch (z) {
    case 5: return &kB;
    case 6: return &kC;
    case 7: return &kN;
    case 8: return &kO;
    case 15: return &kP;
    case 16: return &kS;
    case 9:
    case 17:
    case 35:
    case 53: return &kHalogen;
    default: return nullptr;
  }
}

class SmilesParser {
 public:
  explicit SmilesParser(std::string_view text) : s_(text) {}

  Molecule parse() {
    if (s_.empty()) throw Error(ErrorCode::EmptyInput, "empty SMILES string", 0);
    while (i_ < s_.size()) step();
    finish();
    return std::move(mol_);
  }

 private:
  struct PendingBond {
    int order = 0;  // 0 = unspecified
    std::size_t offset = 0;
  };
  struct RingOpen {
    int atom = -1;
    int order = 0;
    std::size_t offset = 0;
  };

  void step() {
    const char c = s_[i_];
    if (c == '(') {
      if (prev_ < 0)
        throw Error(ErrorCode::UnbalancedParenthesis,
                    "branch must follow an atom", i_);
      if (bond_.order != 0)
        throw Error(ErrorCode::UnknownAtomSymbol,
                    "expected atom after bond symbol", i_);
      branch_.push_back(prev_);
      paren_offsets_.push_back(i_);
      ++i_;
    } else if (c == ')') {
      if (bond_.order != 0)
        throw Error(ErrorCode::UnknownAtomSymbol,
                    "expected atom after bond symbol", i_);
      if (branch_.empty())
        throw Error(ErrorCode::UnbalancedParenthesis,
                    "closing parenthesis without an open branch", i_);
      prev_ = branch_.back();
      branch_.pop_back();
      paren_offsets_.pop_back();
      ++i_;
    } else if (c == '-' || c == '=' || c == '#' || c == ':' || c == '/' ||
               c == '\\') {
      if (prev_ < 0)
        throw Error(ErrorCode::UnknownAtomSymbol,
                    "bond symbol must follow an atom", i_);
      if (bond_.order != 0)
        throw Error(ErrorCode::UnknownAtomSymbol,
                    "expected atom after bond symbol", i_);
      // '/' and '\' encode double-bond geometry, which is parsed and
      // discarded; they bind like single bonds.
      bond_.order = (c == '=') ? 2 : (c == '#') ? 3 : (c == ':') ? 4 : 1;
      bond_.offset = i_;
      ++i_;
    } else if (c >= '0' && c <= '9') {
      ring_closure(int(c - '0'), i_);
      ++i_;
    } else if (c == '%') {
      if (i_ + 2 >= s_.size() || !is_digit(s_[i_ + 1]) || !is_digit(s_[i_ + 2]))
        throw Error(ErrorCode::UnknownAtomSymbol,
                    "'%' ring closure needs two digits", i_);
      ring_closure((s_[i_ + 1] - '0') * 10 + (s_[i_ + 2] - '0'), i_);
      i_ += 3;
    } else if (c == '[') {
      add_atom(parse_bracket_atom());
    } else {
      add_atom(parse_organic_atom());
    }
  }

  static bool is_digit(char c) { return c >= '0' && c <= '9'; }

  Atom parse_organic_atom() {
    const std::size_t at = i_;
    const char c = s_[i_];
    Atom atom;
    atom.offset = at;
    // two-letter symbols first
    if (c == 'C' && i_ + 1 < s_.size() && s_[i_ + 1] == 'l') {
      atom.atomic_number = 17;
      i_ += 2;
      return atom;
    }
    if (c == 'B' && i_ + 1 < s_.size() && s_[i_ + 1] == 'r') {
      atom.atomic_number = 35;
      i_ += 2;
      return atom;
    }
    switch (c) {
      case 'B': atom.atomic_number = 5; break;
      case 'C': atom.atomic_number = 6; break;
      case 'N': atom.atomic_number = 7; break;
      case 'O': atom.atomic_number = 8; break;
      case 'P': atom.atomic_number = 15; break;
      case 'S': atom.atomic_number = 16; break;
      case 'F': atom.atomic_number = 9; break;
      case 'I': atom.atomic_number = 53; break;
      case 'b': atom.atomic_number = 5; atom.aromatic = true; break;
      case 'c': atom.atomic_number = 6; atom.aromatic = true; break;
      case 'n': atom.atomic_number = 7; atom.aromatic = true; break;
      case 'o': atom.atomic_number = 8; atom.aromatic = true; break;
      case 'p': atom.atomic_number = 15; atom.aromatic = true; break;
      case 's': atom.atomic_number = 16; atom.aromatic = true; break;
      default:
        throw Error(ErrorCode::UnknownAtomSymbol,
                    std::string("unexpected character '") +
                        (std::isprint(static_cast<unsigned char>(c)) ? std::string(1, c)
                                                                     : std::string("\\x")) +
                        "'",
                    at);
    }
    ++i_;
    return atom;
  }

  Atom parse_bracket_atom() {
    const std::size_t open = i_;
    ++i_;  // consume '['
    Atom atom;
    atom.offset = open;
    atom.from_bracket = true;
    // isotope digits: accepted and discarded
    while (i_ < s_.size() && is_digit(s_[i_])) ++i_;
    if (i_ >= s_.size())
      throw Error(ErrorCode::UnknownAtomSymbol, "unterminated bracket atom", open);
    // element symbol; lowercase first letter marks an aromatic atom
    const std::size_t sym_at = i_;
    std::string sym;
    if (std::islower(static_cast<unsigned char>(s_[i_]))) {
      atom.aromatic = true;
      sym.push_back(char(std::toupper(static_cast<unsigned char>(s_[i_]))));
      ++i_;
      // two-letter lowercase aromatics (se, as)
      if (i_ < s_.size() && (s_[i_] == 'e' || s_[i_] == 's') &&
          (sym == "S" || sym == "A")) {
        sym.push_back(s_[i_]);
        ++i_;
      }
    } else if (std::isupper(static_cast<unsigned char>(s_[i_]))) {
      sym.push_back(s_[i_]);
      ++i_;
      if (i_ < s_.size() && std::islower(static_cast<unsigned char>(s_[i_]))) {
        std::string two = sym + s_[i_];
        if (element_table().count(two)) {
          sym = two;
          ++i_;
        }
      }
    } else {
      throw Error(ErrorCode::UnknownAtomSymbol, "expected element symbol", sym_at);
    }
    const auto it = element_table().find(sym);
    if (it == element_table().end())
      throw Error(ErrorCode::UnknownAtomSymbol, "unknown element '" + sym + "'",
                  sym_at);
    atom.atomic_number = it->second;
    // chirality: parsed and discarded
    while (i_ < s_.size() && s_[i_] == '@') ++i_;
    // explicit hydrogen count
    if (i_ < s_.size() && s_[i_] == 'H') {
      ++i_;
      atom.explicit_h = 1;
      if (i_ < s_.size() && is_digit(s_[i_])) {
        atom.explicit_h = 0;
        while (i_ < s_.size() && is_digit(s_[i_]))
          atom.explicit_h = atom.explicit_h * 10 + (s_[i_++] - '0');
      }
    }
    // formal charge: +, -, ++, --, +n, -n
    if (i_ < s_.size() && (s_[i_] == '+' || s_[i_] == '-')) {
      const char sign_char = s_[i_];
      const int sign = sign_char == '+' ? 1 : -1;
      int magnitude = 0;
      while (i_ < s_.size() && s_[i_] == sign_char) {
        ++magnitude;
        ++i_;
      }
      if (magnitude == 1 && i_ < s_.size() && is_digit(s_[i_])) {
        magnitude = 0;
        while (i_ < s_.size() && is_digit(s_[i_]))
          magnitude = magnitude * 10 + (s_[i_++] - '0');
      }
      atom.formal_charge = sign * magnitude;
    }
    // atom class: accepted and discarded
    if (i_ < s_.size() && s_[i_] == ':') {
      ++i_;
      if (i_ >= s_.size() || !is_digit(s_[i_]))
        throw Error(ErrorCode::UnknownAtomSymbol, "atom class needs digits", i_);
      while (i_ < s_.size() && is_digit(s_[i_])) ++i_;
    }
    if (i_ >= s_.size() || s_[i_] != ']')
      throw Error(ErrorCode::UnknownAtomSymbol, "expected ']' in bracket atom",
                  i_ < s_.size() ? i_ : s_.size());
    ++i_;
    return atom;
  }

  void add_atom(Atom atom) {
    const int idx = int(mol_.atoms.size());
    mol_.atoms.push_back(atom);
    if (prev_ >= 0) add_bond(prev_, idx, bond_.order, atom.offset);
    bond_ = {};
    prev_ = idx;
  }

  void add_bond(int a, int b, int stated_order, std::size_t at) {
    if (a == b)
      throw Error(ErrorCode::ValenceViolation, "bond from an atom to itself", at);
    for (const Bond& e : mol_.bonds)
      if ((e.a == a && e.b == b) || (e.a == b && e.b == a))
        throw Error(ErrorCode::ValenceViolation,
                    "duplicate bond between the same atoms", at);
    BondOrder order;
    if (stated_order != 0) {
      order = BondOrder(stated_order);
    } else {
      order = (mol_.atoms[std::size_t(a)].aromatic &&
               mol_.atoms[std::size_t(b)].aromatic)
                  ? kAromatic
                  : kSingle;
    }
    mol_.bonds.push_back(Bond{a, b, order, false});
  }

  void ring_closure(int number, std::size_t at) {
    if (prev_ < 0)
      throw Error(ErrorCode::UnknownAtomSymbol,
                  "ring closure must follow an atom", at);
    RingOpen& slot = rings_[std::size_t(number)];
    if (slot.atom < 0) {
      slot = RingOpen{prev_, bond_.order, at};
      bond_ = {};
      return;
    }
    int order = 0;
    if (slot.order != 0 && bond_.order != 0 && slot.order != bond_.order)
      throw Error(ErrorCode::ValenceViolation,
                  "conflicting ring bond orders", at);
    order = slot.order != 0 ? slot.order : bond_.order;
    add_bond(slot.atom, prev_, order, at);
    slot = RingOpen{};
    bond_ = {};
  }

  void finish() {
    if (bond_.order != 0)
      throw Error(ErrorCode::UnknownAtomSymbol, "expected atom after bond symbol",
                  s_.size());
    if (!branch_.empty())
      throw Error(ErrorCode::UnbalancedParenthesis, "unclosed branch",
                  paren_offsets_.back());
    for (const RingOpen& r : rings_)
      if (r.atom >= 0)
        throw Error(ErrorCode::UnclosedRing, "ring closure digit never closed",
                    r.offset);
    assign_implicit_hydrogens();
    mark_rings();
  }

  void assign_implicit_hydrogens() {
    // bond order sums tracked in halves so aromatic bonds count 1.5
    std::vector<int> sum2(mol_.atoms.size(), 0);
    for (const Bond& e : mol_.bonds) {
      const int half = e.order == kAromatic ? 3 : e.order * 2;
      sum2[std::size_t(e.a)] += half;
      sum2[std::size_t(e.b)] += half;
    }
    for (std::size_t a = 0; a < mol_.atoms.size(); ++a) {
      Atom& atom = mol_.atoms[a];
      if (atom.from_bracket) continue;  // bracket atoms carry explicit H only
      const std::vector<int>* valences = organic_valences(atom.atomic_number);
      if (valences == nullptr) continue;
      const int total = sum2[a] / 2;
      int chosen = -1;
      for (int v : *valences)
        if (v >= total) {
          chosen = v;
          break;
        }
      if (chosen < 0)
        throw Error(ErrorCode::ValenceViolation,
                    "bond order sum exceeds allowed valence", atom.offset);
      atom.implicit_h = chosen - total;
    }
  }

  // A bond is in a ring iff it is not a bridge; computed with an iterative
  // DFS so pathological chain inputs cannot overflow the stack.
  void mark_rings() {
    const std::size_t n = mol_.atoms.size();
    const auto adj = mol_.adjacency();
    std::vector<int> disc(n, -1), low(n, 0);
    int timer = 0;
    struct Frame {
      int node;
      int parent_edge;
      std::size_t next;
    };
    for (std::size_t root = 0; root < n; ++root) {
      if (disc[root] >= 0) continue;
      std::vector<Frame> stack{{int(root), -1, 0}};
      disc[root] = low[root] = timer++;
      while (!stack.empty()) {
        Frame& f = stack.back();
        const std::size_t u = std::size_t(f.node);
        if (f.next < adj[u].size()) {
          const int ei = adj[u][f.next++];
          if (ei == f.parent_edge) continue;
          const Bond& e = mol_.bonds[std::size_t(ei)];
          const int v = e.a == f.node ? e.b : e.a;
          if (disc[std::size_t(v)] < 0) {
            disc[std::size_t(v)] = low[std::size_t(v)] = timer++;
            stack.push_back(Frame{v, ei, 0});
          } else {
            low[u] = std::min(low[u], disc[std::size_t(v)]);
          }
        } else {
          const int parent_edge = f.parent_edge;
          stack.pop_back();
          if (!stack.empty()) {
            const std::size_t p = std::size_t(stack.back().node);
            low[p] = std::min(low[p], low[u]);
            if (low[u] > disc[p]) continue;  // bridge: stays out of rings
            mol_.bonds[std::size_t(parent_edge)].in_ring = true;
          }
        }
      }
    }
    for (const Bond& e : mol_.bonds)
      if (e.in_ring) {
        mol_.atoms[std::size_t(e.a)].in_ring = true;
        mol_.atoms[std::size_t(e.b)].in_ring = true;
      }
  }

  std::string_view s_;
  std::size_t i_ = 0;
  Molecule mol_;
  int prev_ = -1;
  PendingBond bond_;
  std::vector<int> branch_;
  std::vector<std::size_t> paren_offsets_;
  std::array<RingOpen, 100> rings_;
};

}  // namespace detail

// Parses the supported SMILES subset: organic-subset atoms, bracket atoms
// with charge/explicit H, bonds - = # :, branches, ring closures (digits and
// %nn), aromatic lowercase atoms. Stereo markers and isotopes are accepted
// and discarded. Throws Error with a byte offset on malformed input.
inline Molecule parse_smiles(std::string_view text) {
  return detail::SmilesParser(text).parse();
}

// Hashed circular fingerprint over atom environments.
class Fingerprint {
 public:
  Fingerprint() = default;
  explicit Fingerprint(int width) : bits_(width) {}

  int width() const { return bits_.width(); }
  const BitVec& bits() const { return bits_; }
  BitVec& bits() { return bits_; }
  int popcount() const { return bits_.popcount(); }
  bool test(int i) const { return bits_.test(i); }

  friend bool operator==(const Fingerprint&, const Fingerprint&) = default;

 private:
  BitVec bits_;
};

namespace detail {

class EnvHash {
 public:
  void add(std::uint64_t v) {
    h_ = mix64(h_ ^ (mix64(v) + 0x9e3779b97f4a7c15ULL + (h_ << 6) + (h_ >> 2)));
  }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 0x9e3779b97f4a7c15ULL;
};

inline std::uint64_t initial_invariant(const Atom& a, int degree) {
  EnvHash h;
  h.add(1);  // tag: radius-0 invariant
  h.add(std::uint64_t(a.atomic_number));
  h.add(std::uint64_t(degree));
  h.add(std::uint64_t(a.total_h()));
  h.add(std::uint64_t(std::int64_t(a.formal_charge)));
  h.add(a.in_ring ? 1 : 0);
  h.add(a.aromatic ? 1 : 0);
  return h.value();
}

}  // namespace detail

// ECFP-style circular fingerprint. Atom environments are grown breadth-first
// for `radius` iterations; environments covering an atom set already claimed
// by an earlier (or same-iteration, smaller-hash) environment are dropped;
// surviving hashes are folded modulo `width`.
inline Fingerprint circular_fingerprint(const Molecule& mol, int radius = 2,
                                        int width = 1024) {
  if (radius < 0)
    throw Error(ErrorCode::InvalidSpec, "fingerprint radius must be >= 0");
  if (width < 64 || (width & (width - 1)) != 0)
    throw Error(ErrorCode::InvalidSpec,
                "fingerprint width must be a power of two >= 64");
  const std::size_t n = mol.atoms.size();
  const auto adj = mol.adjacency();

  std::vector<std::uint64_t> inv(n);
  for (std::size_t a = 0; a < n; ++a)
    inv[a] = detail::initial_invariant(mol.atoms[a], int(adj[a].size()));

  // covered atom set per center, grown once per iteration
  std::vector<std::vector<int>> cover(n);
  for (std::size_t a = 0; a < n; ++a) cover[a] = {int(a)};

  struct Candidate {
    std::vector<int> atoms;
    std::uint64_t code;
    int iteration;
  };
  // kept environments, keyed by covered atom set
  std::map<std::vector<int>, std::uint64_t> kept;
  for (std::size_t a = 0; a < n; ++a) kept[cover[a]] = inv[a];

  for (int iter = 1; iter <= radius; ++iter) {
    std::vector<std::uint64_t> next_inv(n);
    std::vector<std::vector<int>> next_cover(n);
    std::vector<Candidate> candidates;
    candidates.reserve(n);
    for (std::size_t a = 0; a < n; ++a) {
      std::vector<std::pair<int, std::uint64_t>> nbrs;
      nbrs.reserve(adj[a].size());
      std::vector<int> merged = cover[a];
      for (int ei : adj[a]) {
        const Bond& e = mol.bonds[std::size_t(ei)];
        const int v = (std::size_t(e.a) == a) ? e.b : e.a;
        nbrs.emplace_back(int(e.order), inv[std::size_t(v)]);
        merged.insert(merged.end(), cover[std::size_t(v)].begin(),
                      cover[std::size_t(v)].end());
      }
      std::sort(nbrs.begin(), nbrs.end());
      std::sort(merged.begin(), merged.end());
      merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
      detail::EnvHash h;
      h.add(2);  // tag: grown environment
      h.add(std::uint64_t(iter));
      h.add(inv[a]);
      for (const auto& [order, code] : nbrs) {
        h.add(std::uint64_t(order));
        h.add(code);
      }
      next_inv[a] = h.value();
      next_cover[a] = merged;
      candidates.push_back(Candidate{std::move(merged), next_inv[a], iter});
    }
    // within one iteration ties on atom set keep the smaller code, making
    // the result independent of atom input order
    std::sort(candidates.begin(), candidates.end(),
              [](const Candidate& x, const Candidate& y) {
                return std::tie(x.atoms, x.code) < std::tie(y.atoms, y.code);
              });
    for (const Candidate& cand : candidates)
      kept.try_emplace(cand.atoms, cand.code);
    inv = std::move(next_inv);
    cover = std::move(next_cover);
  }

  Fingerprint fp(width);
  for (const auto& [atoms, code] : kept)
    fp.bits().set(int(code & std::uint64_t(width - 1)));
  return fp;
}

// |a n b| / |a u b|; 0 when both sets are empty.
inline double tanimoto(const Fingerprint& a, const Fingerprint& b) {
  if (a.width() != b.width())
    throw Error(ErrorCode::WidthMismatch,
                "fingerprint widths differ: " + std::to_string(a.width()) +
                    " vs " + std::to_string(b.width()));
  const int inter = BitVec::intersection_size(a.bits(), b.bits());
  const int uni = a.popcount() + b.popcount() - inter;
  if (uni == 0) return 0.0;
  return double(inter) / double(uni);
}

}  // namespace mtqsar::chem
