#include "spinrelax/group_theory.hpp"

#include <algorithm>
#include <cctype>

#include "spinrelax/errors.hpp"

namespace spinrelax::group {

namespace {

constexpr GaussInt I{0, 1};

constexpr std::array<GroupClass, kClassCount> kClasses{{
    {"E", 1}, {"Ebar", 1}, {"2C3", 2}, {"2C3bar", 2}, {"3sv", 3}, {"3svbar", 3}}};

const std::array<RepCharacters, 6> kCharacters{{
    {1, 1, 1, 1, 1, 1},
    {1, 1, 1, 1, -1, -1},
    {2, 2, -1, -1, 0, 0},
    {2, -2, 1, -1, 0, 0},
    {1, -1, -1, 1, I, GaussInt{0, -1}},
    {1, -1, -1, 1, GaussInt{0, -1}, I},
}};

std::string lower(std::string_view s) {
  std::string out(s);
  std::ranges::transform(out, out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::string to_string(GaussInt z) {
  if (z.im == 0) return std::to_string(z.re);
  const std::string imag = z.im == 1 ? "i" : z.im == -1 ? "-i" : std::to_string(z.im) + "i";
  if (z.re == 0) return imag;
  return std::to_string(z.re) + (z.im > 0 ? "+" : "") + imag;
}

const std::array<GroupClass, kClassCount>& classes() { return kClasses; }

std::string_view name(Irrep irrep) {
  switch (irrep) {
    case Irrep::A1: return "A1";
    case Irrep::A2: return "A2";
    case Irrep::E: return "E";
    case Irrep::G4: return "G4";
    case Irrep::G5: return "G5";
    case Irrep::G6: return "G6";
  }
  return "?";
}

Irrep parse_irrep(std::string_view text) {
  std::string s = lower(text);
  if (s.starts_with("gamma")) s = "g" + s.substr(5);
  for (Irrep r : kAllIrreps)
    if (s == lower(name(r))) return r;
  throw InvalidParameters("unknown irrep '" + std::string(text) + "'");
}

bool is_double_valued(Irrep irrep) { return irrep == Irrep::G4 || irrep == Irrep::G5 || irrep == Irrep::G6; }

const RepCharacters& characters(Irrep irrep) { return kCharacters[static_cast<std::size_t>(irrep)]; }

std::int64_t dimension(Irrep irrep) { return characters(irrep)[0].re; }

CharacterTable character_table() { return {kClasses, kAllIrreps, kCharacters}; }

GaussInt inner_product(const RepCharacters& a, const RepCharacters& b) {
  GaussInt sum;
  for (std::size_t c = 0; c < kClassCount; ++c) sum += GaussInt{kClasses[c].size} * a[c] * b[c].conj();
  if (sum.re % kGroupOrder != 0 || sum.im % kGroupOrder != 0)
    throw NotARepresentation("character inner product " + to_string(sum) + "/12 is not integral");
  return {sum.re / kGroupOrder, sum.im / kGroupOrder};
}

RepCharacters conjugate(const RepCharacters& a) {
  RepCharacters out;
  std::ranges::transform(a, out.begin(), [](GaussInt z) { return z.conj(); });
  return out;
}

RepCharacters product(const RepCharacters& a, const RepCharacters& b) {
  RepCharacters out;
  for (std::size_t c = 0; c < kClassCount; ++c) out[c] = a[c] * b[c];
  return out;
}

RepCharacters product(Irrep a, bool conjA, Irrep b) {
  return product(conjA ? conjugate(characters(a)) : characters(a), characters(b));
}

std::int64_t Decomposition::dimension() const {
  std::int64_t d = 0;
  for (Irrep r : kAllIrreps) d += (*this)[r] * group::dimension(r);
  return d;
}

std::vector<Irrep> Decomposition::irreps() const {
  std::vector<Irrep> out;
  for (Irrep r : kAllIrreps) out.insert(out.end(), static_cast<std::size_t>((*this)[r]), r);
  return out;
}

std::string to_string(const Decomposition& d) {
  std::string out;
  for (Irrep r : kAllIrreps) {
    if (d[r] == 0) continue;
    if (!out.empty()) out += " + ";
    if (d[r] > 1) out += std::to_string(d[r]);
    out += name(r);
  }
  return out.empty() ? "0" : out;
}

Decomposition decompose(const RepCharacters& rep) {
  if (rep[0].im != 0 || rep[0].re < 1) throw NotARepresentation("identity character must be a positive integer");
  Decomposition d;
  for (Irrep r : kAllIrreps) {
    const GaussInt m = inner_product(rep, characters(r));
    if (m.im != 0 || m.re < 0)
      throw NotARepresentation("multiplicity of " + std::string(name(r)) + " is " + to_string(m));
    d.multiplicity[static_cast<std::size_t>(r)] = m.re;
  }
  if (d.dimension() != rep[0].re) throw NotARepresentation("multiplicities do not account for the dimension");
  return d;
}

std::string_view name(FieldOperator op) {
  switch (op) {
    case FieldOperator::EPar: return "E_par";
    case FieldOperator::EPerp: return "E_perp";
    case FieldOperator::BPar: return "B_par";
    case FieldOperator::BPerp: return "B_perp";
  }
  return "?";
}

FieldOperator parse_field_operator(std::string_view text) {
  const std::string s = lower(text);
  for (FieldOperator op : kAllFieldOperators)
    if (s == lower(name(op))) return op;
  throw InvalidParameters("unknown field operator '" + std::string(text) + "'");
}

Irrep irrep_of(FieldOperator op) {
  switch (op) {
    case FieldOperator::EPar: return Irrep::A1;
    case FieldOperator::BPar: return Irrep::A2;
    case FieldOperator::EPerp:
    case FieldOperator::BPerp: return Irrep::E;
  }
  return Irrep::A1;
}

bool is_electric(FieldOperator op) { return op == FieldOperator::EPar || op == FieldOperator::EPerp; }

SelectionRule selection_rule(Irrep bra, Irrep ket, FieldOperator op) {
  const Decomposition d = decompose(product(product(bra, true, irrep_of(op)), characters(ket)));
  return {bra, ket, op, d.contains(Irrep::A1), d};
}

std::vector<Irrep> members(KramersDoublet kd) {
  return kd == KramersDoublet::G56 ? std::vector{Irrep::G5, Irrep::G6} : std::vector{Irrep::G4};
}

std::string_view name(KramersDoublet kd) { return kd == KramersDoublet::G56 ? "G56" : "G4"; }

DoubletProfile kd_field_profile(KramersDoublet kd) {
  DoubletProfile profile{kd, {}, false};
  const auto ms = members(kd);
  for (std::size_t k = 0; k < kAllFieldOperators.size(); ++k) {
    FieldResponse resp{kAllFieldOperators[k], false, false, false, {}};
    for (Irrep bra : ms)
      for (Irrep ket : ms) {
        resp.rules.push_back(selection_rule(bra, ket, resp.op));
        resp.allowedByCharacters = resp.allowedByCharacters || resp.rules.back().allowed;
      }
    // Kramers partners cannot be coupled by a time-reversal-even perturbation.
    resp.kramersForbidden = is_electric(resp.op);
    resp.allowed = resp.allowedByCharacters && !resp.kramersForbidden;
    profile.responses[k] = std::move(resp);
  }
  profile.gPerpendicularZero = !profile.response(FieldOperator::BPerp).allowed;
  return profile;
}

}  // namespace spinrelax::group
