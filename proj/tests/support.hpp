#pragma once

#include <gtest/gtest.h>

#include "gpa/error.hpp"
#include "generators.hpp"

#define EXPECT_GPA_ERROR(stmt, expected_kind)                                  \
  do {                                                                         \
    try {                                                                      \
      stmt;                                                                    \
      ADD_FAILURE() << "expected " << gpa::to_string(expected_kind);           \
    } catch (const gpa::Error& e) {                                            \
      EXPECT_EQ(e.kind(), expected_kind) << e.what();                          \
    }                                                                          \
  } while (0)
