#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include "qqc/constants.hpp"
#include "qqc/errors.hpp"

namespace qqc {

// Physical dimension of a config quantity. Only the dimensions the config
// schema actually uses are supported; this is not a general units library.
enum class Dimension { Mass, Energy, AngularFrequency, Length, Dimensionless };

namespace detail {

struct UnitDef {
    std::string_view tag;
    Dimension dim;
    double factor;  // multiply to get atomic units
};

// Supported unit tags. "au"/"a.u." passes through for every dimension.
inline constexpr UnitDef unit_table[] = {
    {"amu", Dimension::Mass, constants::amu_in_au},
    {"uK", Dimension::Energy, constants::microkelvin_in_au},
    {"kHz", Dimension::AngularFrequency, constants::kilohertz_in_au},
    {"nm", Dimension::Length, constants::nm_in_au},
};

inline bool is_au_tag(std::string_view tag) { return tag == "au" || tag == "a.u."; }

}  // namespace detail

// A raw value with a declared unit tag, as read from a config file
// (e.g. the string "6.0 amu").
struct Quantity {
    double value = 0.0;
    std::string unit = "au";
};

// Convert a tagged quantity to internal atomic units. The tag must belong to
// the requested dimension; "au" is accepted for any dimension.
inline double to_internal(const Quantity& q, Dimension dim) {
    if (detail::is_au_tag(q.unit)) return q.value;
    if (dim == Dimension::Dimensionless)
        throw ConfigError("dimensionless quantity must not carry a unit tag, got '" + q.unit + "'");
    for (const auto& u : detail::unit_table) {
        if (u.tag == q.unit) {
            if (u.dim != dim)
                throw ConfigError("unit '" + q.unit + "' does not measure the expected dimension");
            return q.value * u.factor;
        }
    }
    throw ConfigError("unknown unit tag '" + q.unit +
                      "' (supported: amu, uK, kHz, nm, au)");
}

// Inverse of to_internal for the same tag.
inline Quantity from_internal(double value_au, const std::string& unit, Dimension dim) {
    if (detail::is_au_tag(unit)) return {value_au, unit};
    for (const auto& u : detail::unit_table) {
        if (u.tag == unit) {
            if (u.dim != dim)
                throw ConfigError("unit '" + unit + "' does not measure the expected dimension");
            return {value_au / u.factor, unit};
        }
    }
    throw ConfigError("unknown unit tag '" + unit + "'");
}

// Parse a quantity string of the form "<number> <tag>" or a bare number
// (interpreted as atomic units).
inline Quantity parse_quantity(const std::string& text) {
    std::size_t pos = 0;
    double v;
    try {
        v = std::stod(text, &pos);
    } catch (const std::exception&) {
        throw ConfigError("cannot parse quantity '" + text + "'");
    }
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    std::string tag = text.substr(pos);
    if (tag.empty()) tag = "au";
    return {v, tag};
}

// One collision partner. Mass is stored in atomic units.
struct Species {
    std::string label;
    double mass = 0.0;

    Species() = default;
    Species(std::string label_, double mass_au) : label(std::move(label_)), mass(mass_au) {
        if (!(mass > 0.0)) throw DomainError("species '" + label + "' must have positive mass");
    }
    Species(std::string label_, const Quantity& m)
        : Species(std::move(label_), to_internal(m, Dimension::Mass)) {}
};

inline double reduced_mass(const Species& a, const Species& b) {
    return a.mass * b.mass / (a.mass + b.mass);
}

// Characteristic length/energy scales of the polarization interaction,
//   rStar = sqrt(2 m C4) / hbar,   eStar = hbar^2 / (2 m rStar^2).
// The energy definition is kept in one place so it can be swapped if a
// different convention is ever needed.
struct CharacteristicScales {
    double rStar = 0.0;
    double eStar = 0.0;
    double c4 = 0.0;
    double atomMass = 0.0;
};

inline CharacteristicScales make_scales(double c4, double atom_mass) {
    if (!(c4 > 0.0)) throw DomainError("make_scales: C4 must be positive");
    if (!(atom_mass > 0.0)) throw DomainError("make_scales: atom mass must be positive");
    CharacteristicScales s;
    s.c4 = c4;
    s.atomMass = atom_mass;
    s.rStar = std::sqrt(2.0 * atom_mass * c4) / constants::hbar;
    s.eStar = constants::hbar * constants::hbar / (2.0 * atom_mass * s.rStar * s.rStar);
    return s;
}

}  // namespace qqc
