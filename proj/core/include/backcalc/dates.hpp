#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace backcalc {

using Date = std::chrono::sys_days;

// Strict YYYY-MM-DD. Throws InputError on anything else.
Date parse_date(std::string_view text);
std::string format_date(Date d);

// ISO day of week, Monday = 1 ... Sunday = 7.
int iso_weekday(Date d);

// Figure preset: day 0 is 13 March 2020.
inline constexpr std::chrono::year_month_day kFigureDayZero{
    std::chrono::year{2020}, std::chrono::March, std::chrono::day{13}};

}  // namespace backcalc
