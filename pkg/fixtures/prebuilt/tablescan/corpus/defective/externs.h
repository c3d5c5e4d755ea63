void tab_panic(void);
