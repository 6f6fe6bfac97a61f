#include "pgg/rational.hpp"

#include <charconv>
#include <stdexcept>

namespace pgg {
namespace {

std::int64_t parse_int(std::string_view s, std::string_view whole) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw std::invalid_argument("not a rational number: '" + std::string(whole) + "'");
  }
  return v;
}

bool terminating(std::int64_t den) {
  while (den % 2 == 0) den /= 2;
  while (den % 5 == 0) den /= 5;
  return den == 1;
}

}  // namespace

double to_double(const Rational& r) {
  return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

std::string to_string(const Rational& r) {
  const std::int64_t num = r.numerator();
  const std::int64_t den = r.denominator();
  if (den == 1) return std::to_string(num);
  if (!terminating(den)) return std::to_string(num) + "/" + std::to_string(den);

  std::string out = num < 0 ? "-" : "";
  const std::uint64_t abs_num = num < 0 ? static_cast<std::uint64_t>(-(num + 1)) + 1
                                        : static_cast<std::uint64_t>(num);
  const auto uden = static_cast<std::uint64_t>(den);
  out += std::to_string(abs_num / uden);
  out += '.';
  std::uint64_t rem = abs_num % uden;
  while (rem != 0) {
    rem *= 10;
    out += static_cast<char>('0' + rem / uden);
    rem %= uden;
  }
  return out;
}

Rational parse_rational(std::string_view text) {
  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    const std::int64_t num = parse_int(text.substr(0, slash), text);
    const std::int64_t den = parse_int(text.substr(slash + 1), text);
    if (den == 0) throw std::invalid_argument("zero denominator in '" + std::string(text) + "'");
    return {num, den};
  }
  auto dot = text.find('.');
  if (dot == std::string_view::npos) return Rational(parse_int(text, text));

  std::string_view int_part = text.substr(0, dot);
  std::string_view frac_part = text.substr(dot + 1);
  if (frac_part.empty() || frac_part.size() > 17 ||
      frac_part.find_first_not_of("0123456789") != std::string_view::npos) {
    throw std::invalid_argument("not a rational number: '" + std::string(text) + "'");
  }
  const bool negative = !int_part.empty() && int_part.front() == '-';
  if (negative || (!int_part.empty() && int_part.front() == '+')) int_part.remove_prefix(1);
  const std::int64_t whole = int_part.empty() ? 0 : parse_int(int_part, text);
  if (whole < 0) throw std::invalid_argument("not a rational number: '" + std::string(text) + "'");
  std::int64_t scale = 1;
  for (std::size_t i = 0; i < frac_part.size(); ++i) scale *= 10;
  const std::int64_t frac = parse_int(frac_part, text);
  Rational r(whole * scale + frac, scale);
  return negative ? -r : r;
}

std::int64_t round_half_even(const Rational& r) {
  const std::int64_t num = r.numerator();
  const std::int64_t den = r.denominator();  // always > 0
  std::int64_t q = num / den;
  std::int64_t rem = num % den;
  if (rem < 0) {  // floor division
    q -= 1;
    rem += den;
  }
  const std::int64_t twice = 2 * rem;
  if (twice > den || (twice == den && q % 2 != 0)) q += 1;
  return q;
}

}  // namespace pgg
