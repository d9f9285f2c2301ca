#pragma once

#include "cops/theory/decoder.hpp"
#include "cops/theory/divergence.hpp"
#include "cops/theory/offline.hpp"
#include "cops/theory/online.hpp"
#include "cops/theory/pretrain.hpp"
#include "cops/theory/verify.hpp"
#include "cops/theory/world.hpp"
