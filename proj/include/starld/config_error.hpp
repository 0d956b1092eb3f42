#pragma once

#include <stdexcept>
#include <string>

namespace starld {

/// A configuration document failed validation; the message starts with the field path.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& path, const std::string& what)
        : std::runtime_error(path + ": " + what), path_(path) {}
    [[nodiscard]] const std::string& path() const { return path_; }

private:
    std::string path_;
};

}  // namespace starld
