#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace ehrq {

/// A typed table cell. `std::monostate` is SQL NULL (an empty CSV field).
using Cell = std::variant<std::monostate, std::int64_t, double, std::string>;
using Row = std::vector<Cell>;

inline bool is_null(const Cell& c) { return std::holds_alternative<std::monostate>(c); }

/// Shortest round-trip decimal text for a double; always contains '.' or 'e'
/// so it reloads as a real rather than an integer.
std::string format_real(double v);

/// Rendering used for answers and CSV output: NULL -> "", ints bare,
/// reals via format_real.
std::string cell_to_string(const Cell& c);

/// Answer-facing rendering: reals rounded to 6 decimals, trailing zeros dropped.
std::string cell_to_answer(const Cell& c);

/// Binding rendering inside questions: ints bare, reals with up to 2 decimals.
std::string format_binding(const Cell& c);

}  // namespace ehrq
