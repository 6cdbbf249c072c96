"""Configuration parsing, Monte-Carlo campaigns, exact oracles and reports."""
