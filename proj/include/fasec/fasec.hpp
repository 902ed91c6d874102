#pragma once
#include <fasec/config.hpp>
#include <fasec/driver.hpp>
#include <fasec/verification.hpp>
