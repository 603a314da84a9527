"""Bundled default lexicons for the rule-based extractor.

Small, domain-typical word lists so the pipeline runs without external
files. Real deployments should pass their own lexicon files (one term per
line) or plug in a neural extractor.
"""

DEFAULT_ASPECT_TERMS = [
    "fabric", "size", "color", "fit", "material", "quality", "price",
    "zipper", "stitching", "sleeve", "collar", "pocket", "button",
    "waist", "length", "style", "design", "comfort", "sole", "strap",
    "battery", "screen", "camera", "sound", "shipping", "packaging",
    "texture", "pattern", "lining", "elastic", "print", "weight",
]

DEFAULT_POSITIVE_TERMS = [
    "good", "great", "nice", "soft", "perfect", "excellent", "love",
    "comfortable", "sturdy", "beautiful", "amazing", "durable", "cozy",
    "smooth", "lovely", "fantastic", "solid", "bright", "true", "happy",
    "wonderful", "best", "pleasant", "fine", "warm",
]

DEFAULT_NEGATIVE_TERMS = [
    "bad", "poor", "cheap", "terrible", "awful", "flimsy", "scratchy",
    "rough", "broken", "disappointing", "uncomfortable", "thin", "loose",
    "tight", "faded", "wrong", "horrible", "itchy", "weak", "ripped",
    "defective", "ugly", "worst", "stiff", "dull",
]
