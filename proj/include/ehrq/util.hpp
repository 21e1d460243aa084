#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ehrq {

/// SplitMix64-seeded xoshiro256**. Bounded draws use rejection sampling so the
/// stream is identical on every platform (unlike std:: distributions).
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next();
    /// Uniform integer in [lo, hi].
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    /// Uniform index in [0, n).
    std::size_t index(std::size_t n);
    /// Uniform double in [0, 1).
    double uniform();
    bool chance(double p) { return uniform() < p; }

    template <typename T>
    const T& pick(const std::vector<T>& v) {
        return v[index(v.size())];
    }
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
    }

private:
    std::uint64_t s_[4];
};

std::string to_lower(std::string_view s);
bool has_upper(std::string_view s);
std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
bool starts_with_ci(std::string_view s, std::string_view prefix);
/// Replaces every run of whitespace with one space and trims.
std::string collapse_whitespace(std::string_view s);
/// True when `needle` occurs in `hay` delimited by non-alphanumeric characters.
bool contains_word(std::string_view hay, std::string_view needle);

std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 14695981039346656037ULL);

// Civil-date helpers on a proleptic Gregorian calendar.
std::int64_t days_from_civil(int y, unsigned m, unsigned d);
void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d);
/// Formats seconds since 1970-01-01 as "YYYY-MM-DD HH:MM:SS".
std::string format_timestamp(std::int64_t seconds);
std::string format_date(std::int64_t seconds);
std::string format_time_of_day(std::int64_t seconds);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace ehrq
