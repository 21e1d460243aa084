#include "ehrq/cell.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

namespace ehrq {

std::string format_real(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, res.ptr);
    if (s.find_first_of(".en") == std::string::npos) s += ".0";
    return s;
}

std::string cell_to_string(const Cell& c) {
    if (auto p = std::get_if<std::int64_t>(&c)) return std::to_string(*p);
    if (auto p = std::get_if<double>(&c)) return format_real(*p);
    if (auto p = std::get_if<std::string>(&c)) return *p;
    return {};
}

namespace {
std::string fixed_trimmed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    std::string s(buf);
    if (s.find('.') != std::string::npos) {
        while (!s.empty() && s.back() == '0') s.pop_back();
        if (!s.empty() && s.back() == '.') s.pop_back();
    }
    if (s == "-0") s = "0";
    return s;
}
}  // namespace

std::string cell_to_answer(const Cell& c) {
    if (auto p = std::get_if<double>(&c)) return fixed_trimmed(*p, 6);
    return cell_to_string(c);
}

std::string format_binding(const Cell& c) {
    if (auto p = std::get_if<double>(&c)) return fixed_trimmed(*p, 2);
    return cell_to_string(c);
}

}  // namespace ehrq
