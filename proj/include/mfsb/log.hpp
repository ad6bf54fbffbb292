/*
 Copyright 2026 The mfsb Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#ifndef MFSB_LOG_HPP
#define MFSB_LOG_HPP

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string_view>

namespace mfsb::log {

enum class Level { error = 0, info = 1, debug = 2 };

/// Verbosity from MFSB_LOG (error|info|debug). Defaults to error.
inline Level level_from_env()
{
    const char* env = std::getenv("MFSB_LOG");
    if (env == nullptr) return Level::error;
    const std::string_view v(env);
    if (v == "debug") return Level::debug;
    if (v == "info") return Level::info;
    return Level::error;
}

inline Level& current_level()
{
    static Level lvl = level_from_env();
    return lvl;
}

inline bool enabled(Level lvl) { return static_cast<int>(lvl) <= static_cast<int>(current_level()); }

template <typename... Args>
void write(Level lvl, const Args&... args)
{
    if (!enabled(lvl)) return;
    static std::mutex mu;
    std::ostringstream os;
    constexpr const char* tags[] = {"error", "info", "debug"};
    os << "[mfsb:" << tags[static_cast<int>(lvl)] << "] ";
    (os << ... << args);
    os << '\n';
    std::lock_guard lock(mu);
    std::cerr << os.str();
}

template <typename... Args>
void error(const Args&... args) { write(Level::error, args...); }
template <typename... Args>
void info(const Args&... args) { write(Level::info, args...); }
template <typename... Args>
void debug(const Args&... args) { write(Level::debug, args...); }

}  // namespace mfsb::log

#endif  // MFSB_LOG_HPP
