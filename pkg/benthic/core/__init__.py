# core numerical modules
