// Doc-test host for the book; chapters are included once written.
