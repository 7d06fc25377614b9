#pragma once

#include <sstream>

#include <doctest.h>
#include <torch/torch.h>

namespace doctest {

template <>
struct StringMaker<c10::IntArrayRef> {
  static String convert(c10::IntArrayRef s) {
    std::ostringstream ss;
    ss << s;
    return ss.str().c_str();
  }
};

}  // namespace doctest
