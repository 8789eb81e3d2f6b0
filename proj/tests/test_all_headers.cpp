#include <gtest/gtest.h>
#include "ksim/server.hpp"
#include "ksim/export.hpp"
TEST(Headers, Compile) { SUCCEED(); }
