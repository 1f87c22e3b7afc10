#pragma once

#include <cstdio>
#include <memory>
#include <string>

#include "bokeh/error.hpp"

namespace bokeh::detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};

using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::string& path, const char* mode, ErrorCode code) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) fail(code, "cannot open " + path);
    return f;
}

} // namespace bokeh::detail
