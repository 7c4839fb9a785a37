#include <doctest.h>

#include "spinrelax/errors.hpp"
#include "spinrelax/group_theory.hpp"

using namespace spinrelax::group;
using spinrelax::NotARepresentation;

namespace {

Decomposition dec(std::initializer_list<std::pair<Irrep, int>> parts) {
  Decomposition d;
  for (auto [r, m] : parts) d.multiplicity[static_cast<std::size_t>(r)] = m;
  return d;
}

}  // namespace

TEST_CASE("class sizes add up to the group order") {
  std::int64_t total = 0;
  for (const auto& c : classes()) total += c.size;
  CHECK(total == kGroupOrder);
}

TEST_CASE("double-valued characters") {
  CHECK(characters(Irrep::G4) == RepCharacters{2, -2, 1, -1, 0, 0});
  CHECK(characters(Irrep::G5) == RepCharacters{1, -1, -1, 1, GaussInt{0, 1}, GaussInt{0, -1}});
  CHECK(characters(Irrep::G6) == conjugate(characters(Irrep::G5)));
  CHECK(dimension(Irrep::E) == 2);
  CHECK(dimension(Irrep::G5) == 1);
}

TEST_CASE("row orthogonality holds exactly") {
  int pairs = 0;
  for (std::size_t i = 0; i < kAllIrreps.size(); ++i) {
    for (std::size_t j = i; j < kAllIrreps.size(); ++j) {
      const GaussInt ip = inner_product(characters(kAllIrreps[i]), characters(kAllIrreps[j]));
      CHECK(ip == GaussInt{i == j ? 1 : 0});
      pairs += i != j;
    }
  }
  CHECK(pairs == 15);
}

TEST_CASE("column orthogonality") {
  for (std::size_t a = 0; a < kClassCount; ++a)
    for (std::size_t b = 0; b < kClassCount; ++b) {
      GaussInt s;
      for (Irrep r : kAllIrreps) s += characters(r)[a] * characters(r)[b].conj();
      const std::int64_t expect = a == b ? kGroupOrder / classes()[a].size : 0;
      CHECK(s == GaussInt{expect});
    }
}

TEST_CASE("products of characters") {
  CHECK(product(Irrep::G5, true, Irrep::G5) == RepCharacters{1, 1, 1, 1, 1, 1});
  CHECK(product(Irrep::G4, true, Irrep::G4) == RepCharacters{4, 4, 1, 1, 0, 0});
  CHECK(conjugate(characters(Irrep::G5)) == characters(Irrep::G6));
}

TEST_CASE("all 36 ordered products decompose with the right dimension") {
  for (Irrep a : kAllIrreps)
    for (Irrep b : kAllIrreps)
      for (bool conj : {false, true}) {
        const Decomposition d = decompose(product(a, conj, b));
        CHECK(d.dimension() == dimension(a) * dimension(b));
      }
}

TEST_CASE("product table of the double irreps") {
  const Decomposition aae = dec({{Irrep::A1, 1}, {Irrep::A2, 1}, {Irrep::E, 1}});
  const Decomposition e = dec({{Irrep::E, 1}});
  const Decomposition a1 = dec({{Irrep::A1, 1}});
  const Decomposition a2 = dec({{Irrep::A2, 1}});
  // rows: conjugated bra; columns: ket
  CHECK(decompose(product(Irrep::G4, true, Irrep::G4)) == aae);
  CHECK(decompose(product(Irrep::G4, true, Irrep::G5)) == e);
  CHECK(decompose(product(Irrep::G4, true, Irrep::G6)) == e);
  CHECK(decompose(product(Irrep::G5, true, Irrep::G4)) == e);
  CHECK(decompose(product(Irrep::G5, true, Irrep::G5)) == a1);
  CHECK(decompose(product(Irrep::G5, true, Irrep::G6)) == a2);
  CHECK(decompose(product(Irrep::G6, true, Irrep::G4)) == e);
  CHECK(decompose(product(Irrep::G6, true, Irrep::G5)) == a2);
  CHECK(decompose(product(Irrep::G6, true, Irrep::G6)) == a1);
  CHECK(to_string(decompose(product(Irrep::G4, true, Irrep::G4))) == "A1 + A2 + E");
}

TEST_CASE("double irrep times E") {
  CHECK(decompose(product(Irrep::G4, false, Irrep::E)) == dec({{Irrep::G4, 1}, {Irrep::G5, 1}, {Irrep::G6, 1}}));
  CHECK(to_string(decompose(product(Irrep::E, false, Irrep::E))) == "A1 + A2 + E");
}

TEST_CASE("non-representations are rejected") {
  CHECK_THROWS_AS(decompose(RepCharacters{1, 0, 0, 0, 0, 0}), NotARepresentation);
  CHECK_THROWS_AS(decompose(RepCharacters{1, 1, 1, 1, -1, 1}), NotARepresentation);
  // integral but negative multiplicity
  CHECK_THROWS_AS(decompose(RepCharacters{1, 1, 1, 1, -3, -3}), NotARepresentation);
}

TEST_CASE("selection rules from the product table") {
  CHECK_FALSE(selection_rule(Irrep::G5, Irrep::G5, FieldOperator::BPerp).allowed);
  CHECK(selection_rule(Irrep::G5, Irrep::G5, FieldOperator::EPar).allowed);
  CHECK(selection_rule(Irrep::G5, Irrep::G6, FieldOperator::BPar).allowed);
  CHECK(selection_rule(Irrep::G4, Irrep::G5, FieldOperator::EPerp).allowed);
  CHECK(to_string(selection_rule(Irrep::G5, Irrep::G5, FieldOperator::BPerp).product) == "E");

  const std::array doubles{Irrep::G4, Irrep::G5, Irrep::G6};
  for (Irrep bra : doubles)
    for (Irrep ket : doubles) {
      const bool mixed = (bra == Irrep::G4) != (ket == Irrep::G4);
      for (FieldOperator op : kAllFieldOperators) {
        const bool perp = op == FieldOperator::EPerp || op == FieldOperator::BPerp;
        const bool allowed = selection_rule(bra, ket, op).allowed;
        if (mixed) CHECK(allowed == perp);
        if (bra == Irrep::G4 && ket == Irrep::G4) CHECK(allowed);
        if (bra != Irrep::G4 && ket != Irrep::G4) CHECK_FALSE((perp && allowed));
        // symmetric under exchange for these self-conjugate operators
        CHECK(allowed == selection_rule(ket, bra, op).allowed);
      }
    }
}

TEST_CASE("field operator irreps") {
  CHECK(irrep_of(FieldOperator::EPar) == Irrep::A1);
  CHECK(irrep_of(FieldOperator::BPar) == Irrep::A2);
  CHECK(irrep_of(FieldOperator::EPerp) == Irrep::E);
  CHECK(irrep_of(FieldOperator::BPerp) == Irrep::E);
}

TEST_CASE("Kramers doublet profiles") {
  const DoubletProfile g56 = kd_field_profile(KramersDoublet::G56);
  CHECK(g56.response(FieldOperator::BPar).allowed);
  CHECK_FALSE(g56.response(FieldOperator::BPerp).allowed);
  CHECK_FALSE(g56.response(FieldOperator::EPerp).allowed);
  CHECK_FALSE(g56.response(FieldOperator::EPar).allowed);
  CHECK(g56.response(FieldOperator::EPar).kramersForbidden);
  CHECK(g56.gPerpendicularZero);

  const DoubletProfile g4 = kd_field_profile(KramersDoublet::G4);
  CHECK(g4.response(FieldOperator::BPerp).allowed);
  CHECK(g4.response(FieldOperator::BPar).allowed);
  CHECK_FALSE(g4.gPerpendicularZero);
  for (FieldOperator op : kAllFieldOperators) CHECK(g4.response(op).allowedByCharacters);

  // the profile is the aggregate of individual queries
  for (auto kd : {KramersDoublet::G56, KramersDoublet::G4}) {
    const auto prof = kd_field_profile(kd);
    for (FieldOperator op : kAllFieldOperators) {
      bool any = false;
      for (Irrep a : members(kd))
        for (Irrep b : members(kd)) any = any || selection_rule(a, b, op).allowed;
      CHECK(prof.response(op).allowedByCharacters == any);
    }
  }
}

TEST_CASE("parsing names") {
  CHECK(parse_irrep("Gamma4") == Irrep::G4);
  CHECK(parse_irrep("g5") == Irrep::G5);
  CHECK(parse_irrep("A1") == Irrep::A1);
  CHECK(parse_field_operator("B_perp") == FieldOperator::BPerp);
  CHECK_THROWS_AS(parse_irrep("T2"), spinrelax::InvalidParameters);
}
