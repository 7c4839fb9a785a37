#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

// Exact representation theory of the double group C3v (order 12).
// Characters are Gaussian integers; nothing here touches floating point.

namespace spinrelax::group {

struct GaussInt {
  std::int64_t re = 0;
  std::int64_t im = 0;

  constexpr GaussInt() = default;
  constexpr GaussInt(std::int64_t r, std::int64_t i = 0) : re(r), im(i) {}

  constexpr GaussInt conj() const { return {re, -im}; }
  constexpr std::int64_t norm() const { return re * re + im * im; }

  friend constexpr GaussInt operator+(GaussInt a, GaussInt b) { return {a.re + b.re, a.im + b.im}; }
  friend constexpr GaussInt operator-(GaussInt a, GaussInt b) { return {a.re - b.re, a.im - b.im}; }
  friend constexpr GaussInt operator*(GaussInt a, GaussInt b) {
    return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
  }
  constexpr GaussInt& operator+=(GaussInt b) { return *this = *this + b; }
  friend constexpr bool operator==(GaussInt, GaussInt) = default;
};

std::string to_string(GaussInt z);

inline constexpr std::size_t kClassCount = 6;
inline constexpr std::int64_t kGroupOrder = 12;

struct GroupClass {
  std::string_view label;
  std::int64_t size;
};

/// E, Ebar, 2C3, 2C3bar, 3sv, 3svbar.
const std::array<GroupClass, kClassCount>& classes();

enum class Irrep { A1, A2, E, G4, G5, G6 };
inline constexpr std::array<Irrep, 6> kAllIrreps{Irrep::A1, Irrep::A2, Irrep::E, Irrep::G4, Irrep::G5, Irrep::G6};

std::string_view name(Irrep irrep);
/// Accepts A1, A2, E, G4/Gamma4, ... (case-insensitive). Throws InvalidParameters.
Irrep parse_irrep(std::string_view text);
bool is_double_valued(Irrep irrep);

using RepCharacters = std::array<GaussInt, kClassCount>;

const RepCharacters& characters(Irrep irrep);
std::int64_t dimension(Irrep irrep);

struct CharacterTable {
  std::array<GroupClass, kClassCount> classes;
  std::array<Irrep, 6> irreps;
  std::array<RepCharacters, 6> characters;
};

CharacterTable character_table();

/// (1/12) sum size * a * conj(b), exact. Throws NotARepresentation when not integral.
GaussInt inner_product(const RepCharacters& a, const RepCharacters& b);

/// Class-wise product; a is conjugated first when conjA is set.
RepCharacters product(Irrep a, bool conjA, Irrep b);
RepCharacters product(const RepCharacters& a, const RepCharacters& b);
RepCharacters conjugate(const RepCharacters& a);

struct Decomposition {
  std::array<std::int64_t, 6> multiplicity{};  ///< indexed like kAllIrreps

  std::int64_t operator[](Irrep irrep) const { return multiplicity[static_cast<std::size_t>(irrep)]; }
  bool contains(Irrep irrep) const { return (*this)[irrep] > 0; }
  std::int64_t dimension() const;
  std::vector<Irrep> irreps() const;  ///< with repetition, table order
  friend bool operator==(const Decomposition&, const Decomposition&) = default;
};

std::string to_string(const Decomposition& d);  ///< e.g. "A1 + A2 + E", "2E"

/// Throws NotARepresentation when a multiplicity is not a non-negative integer.
Decomposition decompose(const RepCharacters& rep);

enum class FieldOperator { EPar, EPerp, BPar, BPerp };
inline constexpr std::array<FieldOperator, 4> kAllFieldOperators{FieldOperator::EPar, FieldOperator::EPerp,
                                                                 FieldOperator::BPar, FieldOperator::BPerp};

std::string_view name(FieldOperator op);
FieldOperator parse_field_operator(std::string_view text);
/// E_par ~ z (A1), B_par ~ Rz (A2), E_perp ~ (x,y) and B_perp ~ (Rx,Ry) (E).
Irrep irrep_of(FieldOperator op);
bool is_electric(FieldOperator op);

struct SelectionRule {
  Irrep bra;
  Irrep ket;
  FieldOperator op;
  bool allowed;
  Decomposition product;  ///< bra* x op x ket
};

SelectionRule selection_rule(Irrep bra, Irrep ket, FieldOperator op);

/// A Kramers doublet: the time-reversal pair {G5, G6} or a single G4.
enum class KramersDoublet { G56, G4 };

std::vector<Irrep> members(KramersDoublet kd);
std::string_view name(KramersDoublet kd);

struct FieldResponse {
  FieldOperator op;
  bool allowedByCharacters;  ///< some member pair contains A1
  bool kramersForbidden;     ///< time-even operator inside one doublet
  bool allowed;
  std::vector<SelectionRule> rules;  ///< every ordered member pair
};

struct DoubletProfile {
  KramersDoublet kd;
  std::array<FieldResponse, 4> responses;  ///< kAllFieldOperators order
  bool gPerpendicularZero;                 ///< blind to B_perp
  const FieldResponse& response(FieldOperator op) const { return responses[static_cast<std::size_t>(op)]; }
};

DoubletProfile kd_field_profile(KramersDoublet kd);

}  // namespace spinrelax::group
