#pragma once

#include <stdexcept>
#include <string>

namespace pestgan {

/// Bad or unknown configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
   public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Dataset/manifest problems (CLI exit code 3).
class DataError : public std::runtime_error {
   public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite losses or broken training state (CLI exit code 4).
class TrainingFault : public std::runtime_error {
   public:
    explicit TrainingFault(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pestgan
