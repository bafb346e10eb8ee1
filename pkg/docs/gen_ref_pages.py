"Copies README.md to index.md and CHANGELOG.md to changelog.md."

from pathlib import Path

import mkdocs_gen_files

GENERATED_PAGES = {
    Path("README.md"): Path("index.md"),
    Path("CHANGELOG.md"): Path("changelog.md"),
}

for source_path, page_path in GENERATED_PAGES.items():
    with open(source_path, "r") as source:
        with mkdocs_gen_files.open(page_path, "w") as generated_file:
            generated_file.write(source.read())
    mkdocs_gen_files.set_edit_path(page_path, source_path)
