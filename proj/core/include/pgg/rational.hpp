#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <boost/rational.hpp>

namespace pgg {

using Rational = boost::rational<std::int64_t>;

double to_double(const Rational& r);

// Exact decimal when the reduced denominator has only factors 2 and 5
// ("21.25", "15", "-0.5"); otherwise "p/q".
std::string to_string(const Rational& r);

// Accepts integers, finite decimals ("1.5", "-0.125") and "p/q".
// Throws std::invalid_argument on anything else.
Rational parse_rational(std::string_view text);

// Nearest integer with ties to even.
std::int64_t round_half_even(const Rational& r);

}  // namespace pgg
